use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relop {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Relop {
    pub fn holds(self, a: i128, b: i128) -> bool {
        match self {
            Relop::Lt => a < b,
            Relop::Le => a <= b,
            Relop::Eq => a == b,
            Relop::Ge => a >= b,
            Relop::Gt => a > b,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relop::Lt => "<",
            Relop::Le => "<=",
            Relop::Eq => "=",
            Relop::Ge => ">=",
            Relop::Gt => ">",
        }
    }
}

/// `constant + sum(coef * var)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(i64, String)>,
    pub constant: i64,
}

impl LinExpr {
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|(_, v)| v.as_str())
    }

    pub fn eval(&self, value: &dyn Fn(&str) -> Option<i64>) -> Result<i128, String> {
        let mut acc = self.constant as i128;
        for (c, v) in &self.terms {
            let x = value(v).ok_or_else(|| v.clone())?;
            acc += *c as i128 * x as i128;
        }
        Ok(acc)
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (c, v) in &self.terms {
            parts.push(if *c == 1 { v.clone() } else { format!("{v}*{c}") });
        }
        if self.constant != 0 || parts.is_empty() {
            parts.push(self.constant.to_string());
        }
        f.write_str(&parts.join(" + "))
    }
}

/// A chained comparison `e0 op0 e1 op1 e2 ...`, true when every adjacent
/// pair satisfies its operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub exprs: Vec<LinExpr>,
    pub ops: Vec<Relop>,
}

impl Chain {
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.exprs.iter().flat_map(|e| e.vars())
    }

    pub fn eval(&self, value: &dyn Fn(&str) -> Option<i64>) -> Result<bool, String> {
        let vals: Vec<i128> = self.exprs.iter().map(|e| e.eval(value)).collect::<Result<_, _>>()?;
        Ok(self
            .ops
            .iter()
            .enumerate()
            .all(|(i, op)| op.holds(vals[i], vals[i + 1])))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ETok {
    Ident(String),
    Int(i64),
    Plus,
    Minus,
    Star,
    Rel(Relop),
}

fn tokenize(s: &str) -> Result<Vec<ETok>, String> {
    let cs: Vec<char> = s.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let st = i;
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            out.push(ETok::Ident(cs[st..i].iter().collect()));
        } else if c.is_ascii_digit() {
            let st = i;
            while i < cs.len() && cs[i].is_ascii_digit() {
                i += 1;
            }
            let t: String = cs[st..i].iter().collect();
            out.push(ETok::Int(t.parse().map_err(|_| format!("integer `{t}` out of range"))?));
        } else {
            let next = cs.get(i + 1).copied();
            let (tok, w) = match (c, next) {
                ('<', Some('=')) => (ETok::Rel(Relop::Le), 2),
                ('>', Some('=')) => (ETok::Rel(Relop::Ge), 2),
                ('=', Some('=')) => (ETok::Rel(Relop::Eq), 2),
                ('<', _) => (ETok::Rel(Relop::Lt), 1),
                ('>', _) => (ETok::Rel(Relop::Gt), 1),
                ('=', _) => (ETok::Rel(Relop::Eq), 1),
                ('+', _) => (ETok::Plus, 1),
                ('-', _) => (ETok::Minus, 1),
                ('*', _) => (ETok::Star, 1),
                _ => return Err(format!("unexpected character `{c}`")),
            };
            out.push(tok);
            i += w;
        }
    }
    Ok(out)
}

/// Parses `term (relop term)+` where a term is a sum of `IDENT`, `INT`,
/// `IDENT*INT` or `INT*IDENT`.
pub fn parse_chain(s: &str) -> Result<Chain, String> {
    let toks = tokenize(s)?;
    let mut pos = 0;
    let mut exprs = vec![parse_sum(&toks, &mut pos)?];
    let mut ops = Vec::new();
    while let Some(ETok::Rel(op)) = toks.get(pos) {
        pos += 1;
        ops.push(*op);
        exprs.push(parse_sum(&toks, &mut pos)?);
    }
    if pos != toks.len() {
        return Err(format!("unexpected token {:?}", toks[pos]));
    }
    if ops.is_empty() {
        return Err("equation has no comparison operator".into());
    }
    Ok(Chain { exprs, ops })
}

fn parse_sum(toks: &[ETok], pos: &mut usize) -> Result<LinExpr, String> {
    let mut e = LinExpr {
        terms: Vec::new(),
        constant: 0,
    };
    let mut sign = 1i64;
    loop {
        let (coef, var) = parse_product(toks, pos)?;
        match var {
            Some(v) => e.terms.push((sign * coef, v)),
            None => e.constant += sign * coef,
        }
        match toks.get(*pos) {
            Some(ETok::Plus) => sign = 1,
            Some(ETok::Minus) => sign = -1,
            _ => break,
        }
        *pos += 1;
    }
    Ok(e)
}

fn parse_product(toks: &[ETok], pos: &mut usize) -> Result<(i64, Option<String>), String> {
    let first = toks
        .get(*pos)
        .cloned()
        .ok_or("expected a term, found end of equation")?;
    *pos += 1;
    let star = matches!(toks.get(*pos), Some(ETok::Star));
    match (first, star) {
        (ETok::Ident(v), false) => Ok((1, Some(v))),
        (ETok::Int(c), false) => Ok((c, None)),
        (ETok::Ident(v), true) => {
            *pos += 1;
            match toks.get(*pos) {
                Some(ETok::Int(c)) => {
                    *pos += 1;
                    Ok((*c, Some(v)))
                }
                _ => Err(format!("nonlinear or malformed product after `{v}*`")),
            }
        }
        (ETok::Int(c), true) => {
            *pos += 1;
            match toks.get(*pos) {
                Some(ETok::Ident(v)) => {
                    *pos += 1;
                    Ok((c, Some(v.clone())))
                }
                Some(ETok::Int(d)) => {
                    *pos += 1;
                    Ok((c * d, None))
                }
                _ => Err(format!("malformed product after `{c}*`")),
            }
        }
        (t, _) => Err(format!("expected a term, found {t:?}")),
    }
}

/// Resolves placeholders to symbols and symbols to values.
pub fn eval_with_bindings(
    chain: &Chain,
    bindings: &BTreeMap<String, String>,
    assignment: &BTreeMap<String, i64>,
) -> Result<bool, String> {
    chain
        .eval(&|ph| bindings.get(ph).and_then(|sym| assignment.get(sym)).copied())
        .map_err(|ph| bindings.get(&ph).cloned().unwrap_or(ph))
}
