//! OpenQASM 2 statement subset: one `qreg`, the gates `h x z s sdg t tdg
//! rx rz cx ccx cswap`, an optional version line and `include` lines.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::error::{Result, StoreError};
use crate::gate::{GateOp, GateType};
use crate::store::CircuitTable;

fn qasm_name(t: GateType) -> Option<&'static str> {
    Some(match t {
        GateType::H => "h",
        GateType::X => "x",
        GateType::Z => "z",
        GateType::S => "s",
        GateType::Sdg => "sdg",
        GateType::T => "t",
        GateType::Tdg => "tdg",
        GateType::Rx => "rx",
        GateType::Rz => "rz",
        GateType::Cnot => "cx",
        GateType::Toffoli => "ccx",
        GateType::Cswap => "cswap",
        GateType::In | GateType::Out => return None,
    })
}

fn gate_of(name: &str) -> Option<GateType> {
    GateType::ALL.iter().copied().find(|&t| qasm_name(t) == Some(name))
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Sym(char),
}

#[derive(Clone, Copy, Debug)]
struct Pos {
    line: usize,
    column: usize,
}

fn syntax(pos: Pos, message: impl Into<String>) -> StoreError {
    StoreError::Syntax { line: pos.line, column: pos.column, message: message.into() }
}

/// One statement's characters with their source positions.
struct Statement {
    chars: Vec<(char, Pos)>,
    end: Pos,
}

impl Statement {
    fn tokens(&self) -> Result<Vec<(Tok, Pos)>> {
        let c = &self.chars;
        let mut out = Vec::new();
        let mut i = 0;
        while i < c.len() {
            let (ch, pos) = c[i];
            if ch.is_whitespace() {
                i += 1;
            } else if ch.is_ascii_alphabetic() || ch == '_' {
                let start = i;
                while i < c.len() && (c[i].0.is_ascii_alphanumeric() || c[i].0 == '_') {
                    i += 1;
                }
                out.push((Tok::Ident(c[start..i].iter().map(|x| x.0).collect()), pos));
            } else if ch.is_ascii_digit() || ch == '.' {
                let start = i;
                while i < c.len() {
                    let d = c[i].0;
                    let exp_sign = (d == '+' || d == '-') && matches!(c[i - 1].0, 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                out.push((Tok::Number(c[start..i].iter().map(|x| x.0).collect()), pos));
            } else if ch == '"' {
                let start = i + 1;
                i += 1;
                while i < c.len() && c[i].0 != '"' {
                    i += 1;
                }
                if i == c.len() {
                    return Err(syntax(pos, "unterminated string"));
                }
                out.push((Tok::Str(c[start..i].iter().map(|x| x.0).collect()), pos));
                i += 1;
            } else if "[](),-*/+".contains(ch) {
                out.push((Tok::Sym(ch), pos));
                i += 1;
            } else {
                return Err(syntax(pos, format!("unexpected character `{ch}`")));
            }
        }
        Ok(out)
    }
}

struct Cursor<'a> {
    toks: &'a [(Tok, Pos)],
    at: usize,
    end: Pos,
}

impl Cursor<'_> {
    fn pos(&self) -> Pos {
        self.toks.get(self.at).map_or(self.end, |t| t.1)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.at).map(|t| &t.0);
        self.at += 1;
        t
    }

    fn sym(&mut self, s: char) -> Result<()> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Sym(c)) if *c == s => Ok(()),
            _ => Err(syntax(pos, format!("expected `{s}`"))),
        }
    }

    fn ident(&mut self) -> Result<String> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s.clone()),
            _ => Err(syntax(pos, "expected an identifier")),
        }
    }

    fn uint(&mut self) -> Result<u64> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Number(s)) => s.parse().map_err(|_| syntax(pos, format!("`{s}` is not an index"))),
            _ => Err(syntax(pos, "expected an index")),
        }
    }

    fn atom(&mut self) -> Result<f64> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Number(s)) => s.parse().map_err(|_| syntax(pos, format!("`{s}` is not a number"))),
            Some(Tok::Ident(s)) if s == "pi" => Ok(PI),
            _ => Err(syntax(pos, "expected a number or `pi`")),
        }
    }

    /// `[-] atom [(*|/) atom]`
    fn angle(&mut self) -> Result<f64> {
        let negate = matches!(self.peek(), Some(Tok::Sym('-')));
        if negate {
            self.at += 1;
        }
        let mut v = self.atom()?;
        match self.peek() {
            Some(Tok::Sym('*')) => {
                self.at += 1;
                v *= self.atom()?;
            }
            Some(Tok::Sym('/')) => {
                self.at += 1;
                v /= self.atom()?;
            }
            _ => {}
        }
        Ok(if negate { -v } else { v })
    }

    fn done(&self) -> Result<()> {
        if self.at < self.toks.len() {
            return Err(syntax(self.pos(), "unexpected trailing tokens"));
        }
        Ok(())
    }
}

/// Streaming parser yielding gates in program order.
pub struct QasmReader<R: BufRead> {
    input: R,
    line: usize,
    buf: String,
    pending: Vec<(char, Pos)>,
    statements: std::collections::VecDeque<Statement>,
    register: Option<(String, u64)>,
    failed: bool,
}

impl<R: BufRead> QasmReader<R> {
    /// Reads up to and including the `qreg` declaration.
    pub fn new(input: R) -> Result<Self> {
        let mut r = QasmReader {
            input,
            line: 0,
            buf: String::new(),
            pending: Vec::new(),
            statements: Default::default(),
            register: None,
            failed: false,
        };
        while r.register.is_none() {
            match r.next_statement()? {
                Some(st) => {
                    r.statement(&st)?;
                }
                None => return Err(syntax(Pos { line: r.line.max(1), column: 1 }, "missing qreg declaration")),
            }
        }
        Ok(r)
    }

    pub fn num_qubits(&self) -> usize {
        self.register.as_ref().map_or(0, |r| r.1 as usize)
    }

    pub fn register(&self) -> &str {
        self.register.as_ref().map_or("", |r| r.0.as_str())
    }

    fn next_statement(&mut self) -> Result<Option<Statement>> {
        loop {
            if let Some(st) = self.statements.pop_front() {
                return Ok(Some(st));
            }
            self.buf.clear();
            if self.input.read_line(&mut self.buf)? == 0 {
                return match self.pending.iter().find(|c| !c.0.is_whitespace()) {
                    Some(&(_, pos)) => Err(syntax(pos, "statement not terminated by `;`")),
                    None => Ok(None),
                };
            }
            self.line += 1;
            let text = self.buf.split("//").next().unwrap_or("");
            for (i, ch) in text.chars().enumerate() {
                let pos = Pos { line: self.line, column: i + 1 };
                if ch == ';' {
                    let chars = std::mem::take(&mut self.pending);
                    if chars.iter().any(|c| !c.0.is_whitespace()) {
                        self.statements.push_back(Statement { chars, end: pos });
                    }
                } else {
                    self.pending.push((ch, pos));
                }
            }
        }
    }

    /// Applies a declaration or returns the gate a statement describes.
    fn statement(&mut self, st: &Statement) -> Result<Option<GateOp>> {
        let toks = st.tokens()?;
        let mut c = Cursor { toks: &toks, at: 0, end: st.end };
        let head_pos = c.pos();
        let head = c.ident()?;
        match head.as_str() {
            "OPENQASM" => {
                c.atom()?;
                c.done()?;
                return Ok(None);
            }
            "include" => {
                match c.next() {
                    Some(Tok::Str(_)) => {}
                    _ => return Err(syntax(head_pos, "expected a file name")),
                }
                c.done()?;
                return Ok(None);
            }
            "qreg" => {
                if self.register.is_some() {
                    return Err(syntax(head_pos, "only one qreg is supported"));
                }
                let name = c.ident()?;
                c.sym('[')?;
                let size_pos = c.pos();
                let size = c.uint()?;
                if size == 0 {
                    return Err(syntax(size_pos, "register must have at least one qubit"));
                }
                c.sym(']')?;
                c.done()?;
                self.register = Some((name, size));
                return Ok(None);
            }
            _ => {}
        }
        let gate_type = gate_of(&head).ok_or_else(|| syntax(head_pos, format!("unsupported statement `{head}`")))?;
        if self.register.is_none() {
            return Err(syntax(head_pos, "gate before the qreg declaration"));
        }
        let mut param = 0.0;
        if gate_type.is_parametric() {
            c.sym('(')?;
            param = c.angle()?;
            c.sym(')')?;
        } else if matches!(c.peek(), Some(Tok::Sym('('))) {
            return Err(syntax(c.pos(), format!("`{head}` takes no parameter")));
        }
        let mut qubits = Vec::with_capacity(3);
        loop {
            let arg_pos = c.pos();
            let reg = c.ident()?;
            c.sym('[')?;
            let idx = c.uint()?;
            c.sym(']')?;
            let (name, size) = self.register.as_ref().expect("checked above");
            if &reg != name {
                return Err(syntax(arg_pos, format!("unknown register `{reg}`")));
            }
            if idx >= *size {
                return Err(syntax(arg_pos, format!("index {idx} out of range for {name}[{size}]")));
            }
            if qubits.contains(&(idx as u32)) {
                return Err(syntax(arg_pos, format!("qubit {idx} repeated")));
            }
            qubits.push(idx as u32);
            if matches!(c.peek(), Some(Tok::Sym(','))) {
                c.at += 1;
            } else {
                break;
            }
        }
        c.done()?;
        if qubits.len() != gate_type.arity() {
            return Err(syntax(head_pos, format!("`{head}` takes {} qubits, got {}", gate_type.arity(), qubits.len())));
        }
        Ok(Some(GateOp::new(gate_type, &qubits, param)))
    }
}

impl<R: BufRead> Iterator for QasmReader<R> {
    type Item = Result<GateOp>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let result = match self.next_statement() {
                Ok(Some(st)) => self.statement(&st),
                Ok(None) => return None,
                Err(e) => Err(e),
            };
            match result {
                Ok(Some(op)) => return Some(Ok(op)),
                Ok(None) => continue,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QasmProgram {
    pub register: String,
    pub num_qubits: usize,
    pub ops: Vec<GateOp>,
}

pub fn parse_qasm(text: &str) -> Result<QasmProgram> {
    let reader = QasmReader::new(text.as_bytes())?;
    let (register, num_qubits) = (reader.register().to_string(), reader.num_qubits());
    let ops = reader.collect::<Result<Vec<_>>>()?;
    Ok(QasmProgram { register, num_qubits, ops })
}

pub fn format_op(op: &GateOp, register: &str) -> String {
    let name = qasm_name(op.gate_type).expect("boundary rows are never emitted");
    let args: Vec<String> = op.qubits().iter().map(|q| format!("{register}[{q}]")).collect();
    if op.gate_type.is_parametric() {
        format!("{name}({}) {};", op.param, args.join(","))
    } else {
        format!("{name} {};", args.join(","))
    }
}

/// Streams `table` as QASM, one gate per line, in batches of `batch_size`.
pub fn write_qasm(table: &CircuitTable, out: &mut impl Write, batch_size: usize) -> Result<()> {
    writeln!(out, "OPENQASM 2.0;")?;
    writeln!(out, "include \"qelib1.inc\";")?;
    writeln!(out, "qreg q[{}];", table.num_qubits())?;
    let mut cursor = table.extract_cursor()?;
    loop {
        let batch = table.extract_batch(&mut cursor, batch_size.max(1))?;
        if batch.is_empty() {
            break;
        }
        for op in &batch {
            writeln!(out, "{}", format_op(op, "q"))?;
        }
    }
    Ok(())
}

pub fn emit_qasm(table: &CircuitTable) -> Result<String> {
    let mut out = Vec::new();
    write_qasm(table, &mut out, 1 << 16)?;
    Ok(String::from_utf8(out).expect("ascii output"))
}
