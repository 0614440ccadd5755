//! Recursive-descent parser for the flow language.
//!
//! Grammar (newlines are significant outside brackets and braces):
//!
//! ```text
//! source   := (flow)*
//! flow     := "Flow" IDENT NL (decl | inst)*
//! decl     := IDENT ":" "stream" ("[" expr "]")* ("{" attr ("," attr)* "}")? NL
//! attr     := IDENT "=" (IDENT | INT)
//! inst     := IDENT "[" (item ("," item)*)? "]" NL
//! item     := IDENT "=" expr ":" expr          -- iterator
//!           | IDENT "=" IDENT ("[" expr "]")*   -- binding
//! expr     := IDENT | INT
//! ```
//!
//! A declaration is a flow parameter when it carries `type = in|out`, or
//! when it is untyped, indented and part of the contiguous block directly
//! under the `Flow` line. Everything else declared in the body is internal.

use std::collections::HashSet;

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use crate::diag::{Diagnostic, Diagnostics};

pub fn parse_flow_source(text: &str) -> Result<Vec<FlowDef>, Diagnostics> {
    let tokens = lex(text)?;
    let mut p = Parser { toks: tokens, pos: 0 };
    p.source().map_err(Diagnostics::single)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, off: usize) -> &Tok {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn skip_newlines(&mut self) {
        while self.peek().tok == Tok::Newline {
            self.bump();
        }
    }

    fn err_here(&self, msg: impl Into<String>) -> Diagnostic {
        let t = self.peek();
        Diagnostic::error(t.line, t.col, msg)
    }

    fn unexpected(&self, wanted: &str) -> Diagnostic {
        let t = self.peek();
        self.err_here(format!("expected {wanted}, found {}", t.tok.describe()))
    }

    fn expect_end_of_statement(&mut self) -> PResult<()> {
        match self.peek().tok {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(self.unexpected("end of line")),
        }
    }

    fn ident(&mut self, wanted: &str) -> PResult<(String, Token)> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                Ok((s, self.bump()))
            }
            _ => Err(self.unexpected(wanted)),
        }
    }

    fn source(&mut self) -> PResult<Vec<FlowDef>> {
        let mut flows: Vec<FlowDef> = Vec::new();
        let mut names = HashSet::new();
        let mut header = false;
        loop {
            self.skip_newlines();
            let t = self.peek().clone();
            match &t.tok {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "Flow" && t.line_start => {
                    self.bump();
                    let (name, nt) = self.ident("flow name after `Flow`")?;
                    self.expect_end_of_statement()?;
                    if !names.insert(name.clone()) {
                        return Err(Diagnostic::error(
                            nt.line,
                            nt.col,
                            format!("duplicate flow name `{name}`"),
                        ));
                    }
                    flows.push(FlowDef {
                        name,
                        params: Vec::new(),
                        internals: Vec::new(),
                        instantiations: Vec::new(),
                        line: t.line,
                    });
                    header = true;
                }
                Tok::Ident(word) => {
                    let word = word.clone();
                    if flows.is_empty() {
                        return Err(match self.peek_at(1) {
                            Tok::Ident(_) => Diagnostic::error(t.line, t.col, format!("unknown keyword `{word}`")),
                            _ => Diagnostic::error(t.line, t.col, format!("`{word}` appears outside of a Flow block")),
                        });
                    }
                    match self.peek_at(1).clone() {
                        Tok::Colon => {
                            let decl = Self::decl(self)?;
                            let indented = t.col > 1;
                            let is_param = if decl.explicit_type {
                                decl.direction != Direction::Internal
                            } else {
                                header && indented
                            };
                            if !is_param && !decl.explicit_type {
                                header = false;
                            }
                            if flow_has_stream(flows.last().unwrap(), &decl.name) {
                                return Err(Diagnostic::error(
                                    t.line,
                                    t.col,
                                    format!("stream `{}` declared twice", decl.name),
                                ));
                            }
                            let flow = flows.last_mut().unwrap();
                            if is_param {
                                flow.params.push(decl);
                            } else {
                                let mut decl = decl;
                                decl.direction = Direction::Internal;
                                flow.internals.push(decl);
                            }
                        }
                        Tok::LBracket => {
                            let inst = self.instantiation()?;
                            header = false;
                            flows.last_mut().unwrap().instantiations.push(inst);
                        }
                        Tok::Ident(_) => {
                            return Err(Diagnostic::error(t.line, t.col, format!("unknown keyword `{word}`")))
                        }
                        _ => {
                            self.bump();
                            return Err(self.unexpected("`:` or `[`"));
                        }
                    }
                }
                _ => return Err(self.unexpected("a declaration, instantiation or `Flow`")),
            }
        }
        Ok(flows)
    }

    fn expr(&mut self, wanted: &str) -> PResult<Expr> {
        self.skip_newlines();
        match self.peek().tok.clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(Expr::Sym(s))
            }
            Tok::Eof => Err(self.err_here(format!("unterminated bracket: expected {wanted}"))),
            _ => Err(self.unexpected(wanted)),
        }
    }

    fn close_bracket(&mut self, open: &Token) -> PResult<()> {
        self.skip_newlines();
        match self.peek().tok {
            Tok::RBracket => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Err(Diagnostic::error(open.line, open.col, "unterminated `[`")),
            _ => Err(self.unexpected("`]`")),
        }
    }

    fn decl(&mut self) -> PResult<StreamDecl> {
        let (name, nt) = self.ident("stream name")?;
        self.bump(); // ':'
        let (kw, kt) = self.ident("`stream`")?;
        if kw != "stream" {
            return Err(Diagnostic::error(
                kt.line,
                kt.col,
                format!("unknown keyword `{kw}`, expected `stream`"),
            ));
        }
        let mut shape = Vec::new();
        while self.peek().tok == Tok::LBracket {
            let open = self.bump();
            self.skip_newlines();
            if self.peek().tok == Tok::RBracket {
                return Err(self.err_here("malformed shape bracket: empty dimension"));
            }
            let e = self
                .expr("a dimension")
                .map_err(|d| Diagnostic::error(d.line, d.column, format!("malformed shape bracket: {}", d.message)))?;
            self.close_bracket(&open)
                .map_err(|d| Diagnostic::error(d.line, d.column, format!("malformed shape bracket: {}", d.message)))?;
            shape.push(e);
        }
        let mut decl = StreamDecl {
            name,
            shape,
            direction: Direction::Out,
            explicit_type: false,
            labels: Vec::new(),
            attributes: Default::default(),
            line: nt.line,
        };
        if self.peek().tok == Tok::LBrace {
            let open = self.bump();
            self.attrs(&mut decl, &open)?;
        }
        self.expect_end_of_statement()?;
        Ok(decl)
    }

    fn attrs(&mut self, decl: &mut StreamDecl, open: &Token) -> PResult<()> {
        loop {
            self.skip_newlines();
            match self.peek().tok {
                Tok::RBrace => {
                    self.bump();
                    return Ok(());
                }
                Tok::Eof => return Err(Diagnostic::error(open.line, open.col, "unterminated `{`")),
                _ => {}
            }
            let (key, kt) = self.ident("attribute name")?;
            self.skip_newlines();
            if self.peek().tok != Tok::Eq {
                return Err(self.unexpected("`=`"));
            }
            self.bump();
            self.skip_newlines();
            let vt = self.peek().clone();
            let value = match &vt.tok {
                Tok::Ident(s) => s.clone(),
                Tok::Int(v) => v.to_string(),
                Tok::Eof => return Err(Diagnostic::error(open.line, open.col, "unterminated `{`")),
                _ => return Err(self.unexpected("attribute value")),
            };
            self.bump();
            match key.as_str() {
                "type" => {
                    decl.direction = match value.as_str() {
                        "in" => Direction::In,
                        "out" => Direction::Out,
                        "internal" => Direction::Internal,
                        _ => {
                            return Err(Diagnostic::error(
                                vt.line,
                                vt.col,
                                format!("unknown stream type `{value}`"),
                            ))
                        }
                    };
                    decl.explicit_type = true;
                }
                "label" => decl.labels.push(value),
                _ => {
                    if decl.attributes.insert(key.clone(), value).is_some() {
                        return Err(Diagnostic::error(
                            kt.line,
                            kt.col,
                            format!("attribute `{key}` given twice"),
                        ));
                    }
                }
            }
            self.skip_newlines();
            match self.peek().tok {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RBrace => {}
                Tok::Eof => return Err(Diagnostic::error(open.line, open.col, "unterminated `{`")),
                _ => return Err(self.unexpected("`,` or `}`")),
            }
        }
    }

    fn instantiation(&mut self) -> PResult<Instantiation> {
        let (callee, ct) = self.ident("callee name")?;
        let open = self.bump(); // '['
        let mut inst = Instantiation {
            callee,
            iterators: Vec::new(),
            bindings: Vec::new(),
            line: ct.line,
        };
        loop {
            self.skip_newlines();
            match self.peek().tok {
                Tok::RBracket => {
                    self.bump();
                    break;
                }
                Tok::Eof => return Err(Diagnostic::error(open.line, open.col, "unterminated `[`")),
                _ => {}
            }
            let (name, _) = self.ident("iterator or formal name")?;
            self.skip_newlines();
            if self.peek().tok != Tok::Eq {
                return Err(self.unexpected("`=`"));
            }
            self.bump();
            self.skip_newlines();
            let is_iter = matches!(self.peek().tok, Tok::Int(_))
                || (matches!(self.peek().tok, Tok::Ident(_)) && *self.peek_at(1) == Tok::Colon);
            if is_iter {
                let lower = self.expr("lower bound")?;
                self.skip_newlines();
                if self.peek().tok != Tok::Colon {
                    return Err(self.unexpected("`:` in iterator range"));
                }
                self.bump();
                let upper = self.expr("upper bound")?;
                inst.iterators.push(Iterator {
                    var: name,
                    lower,
                    upper,
                });
            } else {
                let (stream, _) = match self.peek().tok {
                    Tok::Eof => return Err(Diagnostic::error(open.line, open.col, "unterminated `[`")),
                    _ => self.ident("stream reference")?,
                };
                let mut indices = Vec::new();
                while self.peek().tok == Tok::LBracket {
                    let o = self.bump();
                    indices.push(self.expr("index")?);
                    self.close_bracket(&o)?;
                }
                inst.bindings.push(Binding {
                    formal: name,
                    actual: StreamRef { stream, indices },
                });
            }
            self.skip_newlines();
            match self.peek().tok {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RBracket => {}
                Tok::Eof => return Err(Diagnostic::error(open.line, open.col, "unterminated `[`")),
                _ => return Err(self.unexpected("`,` or `]`")),
            }
        }
        self.expect_end_of_statement()?;
        Ok(inst)
    }
}

fn flow_has_stream(f: &FlowDef, name: &str) -> bool {
    f.stream(name).is_some()
}
