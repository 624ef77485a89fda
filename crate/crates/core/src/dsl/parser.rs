use std::collections::BTreeSet;

use crate::dsl::lexer::{tokenize, Tok, Token};
use crate::dsl::ParseDiagnostic;
use crate::model::{Connection, Endpoint, ExternalInput, ExternalOutput, FlowDefinition, ModuleInstance, ParamValue};

pub(crate) fn parse(src: &str) -> Result<FlowDefinition, ParseDiagnostic> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let flow = p.flow()?;
    p.expect(&Tok::Eof)?;
    Ok(flow)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at(t: &Token, message: impl Into<String>) -> ParseDiagnostic {
        ParseDiagnostic::new(t.line, t.column, message)
    }

    fn expect(&mut self, want: &Tok) -> Result<Token, ParseDiagnostic> {
        let t = self.next();
        if &t.tok == want {
            Ok(t)
        } else {
            Err(Self::err_at(&t, format!("expected {}, found {}", want.describe(), t.tok.describe())))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseDiagnostic> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if s == kw => Ok(()),
            other => Err(Self::err_at(&t, format!("expected '{kw}', found {}", other.describe()))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self, what: &str) -> Result<(String, Token), ParseDiagnostic> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t)),
            other => Err(Self::err_at(&t, format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn string(&mut self, what: &str) -> Result<String, ParseDiagnostic> {
        let t = self.next();
        match &t.tok {
            Tok::Str(s) => Ok(s.clone()),
            other => Err(Self::err_at(&t, format!("expected {what} string, found {}", other.describe()))),
        }
    }

    fn endpoint(&mut self) -> Result<Endpoint, ParseDiagnostic> {
        let (module, _) = self.ident("module id")?;
        self.expect(&Tok::Dot)?;
        let (port, _) = self.ident("port name")?;
        Ok(Endpoint::new(module, port))
    }

    fn flow(&mut self) -> Result<FlowDefinition, ParseDiagnostic> {
        self.keyword("flow")?;
        let mut flow = FlowDefinition::new(self.string("flow name")?);
        if self.at_keyword("version") {
            self.next();
            let t = self.next();
            match &t.tok {
                Tok::Int(v) => flow.version = *v,
                other => return Err(Self::err_at(&t, format!("expected version number, found {}", other.describe()))),
            }
        }
        self.expect(&Tok::LBrace)?;
        let mut ids = BTreeSet::new();
        let mut inputs = BTreeSet::new();
        let mut outputs = BTreeSet::new();
        loop {
            let t = self.next();
            match &t.tok {
                Tok::RBrace => return Ok(flow),
                Tok::Ident(kw) if kw == "module" => {
                    let (id, id_tok) = self.ident("module id")?;
                    if !ids.insert(id.clone()) {
                        return Err(Self::err_at(&id_tok, format!("duplicate module id '{id}'")));
                    }
                    self.expect(&Tok::Colon)?;
                    let (kind, _) = self.ident("module kind")?;
                    let mut m = ModuleInstance::new(id, kind);
                    if self.peek().tok == Tok::LBrace {
                        self.next();
                        self.params(&mut m)?;
                    }
                    if self.at_keyword("gated") {
                        self.next();
                        m.gated = true;
                    }
                    flow.modules.push(m);
                }
                Tok::Ident(kw) if kw == "connect" => {
                    let from = self.endpoint()?;
                    self.expect(&Tok::Arrow)?;
                    let to = self.endpoint()?;
                    flow.connections.push(Connection { from, to });
                }
                Tok::Ident(kw) if kw == "extern" => {
                    let (dir, dir_tok) = self.ident("'input' or 'output'")?;
                    let ep = self.endpoint()?;
                    self.keyword("as")?;
                    let name_tok = self.peek().clone();
                    let name = self.string("extern name")?;
                    let seen = match dir.as_str() {
                        "input" => &mut inputs,
                        "output" => &mut outputs,
                        _ => return Err(Self::err_at(&dir_tok, format!("expected 'input' or 'output', found '{dir}'"))),
                    };
                    if name.is_empty() || !seen.insert(name.clone()) {
                        return Err(Self::err_at(&name_tok, format!("external {dir} name '{name}' is empty or duplicated")));
                    }
                    if dir == "input" {
                        flow.external_inputs.push(ExternalInput { name, target: ep });
                    } else {
                        flow.external_outputs.push(ExternalOutput { name, source: ep });
                    }
                }
                other => {
                    return Err(Self::err_at(
                        &t,
                        format!("expected 'module', 'connect', 'extern' or '}}', found {}", other.describe()),
                    ))
                }
            }
        }
    }

    fn params(&mut self, m: &mut ModuleInstance) -> Result<(), ParseDiagnostic> {
        loop {
            if self.peek().tok == Tok::RBrace {
                self.next();
                return Ok(());
            }
            let (name, name_tok) = self.ident("parameter name or '}'")?;
            self.expect(&Tok::Eq)?;
            let t = self.next();
            let value = match t.tok {
                Tok::Str(s) => ParamValue::Text(s),
                Tok::Int(i) => ParamValue::Int(i),
                Tok::Real(r) => ParamValue::Real(r),
                Tok::Ident(ref b) if b == "true" => ParamValue::Bool(true),
                Tok::Ident(ref b) if b == "false" => ParamValue::Bool(false),
                ref other => return Err(Self::err_at(&t, format!("expected a literal, found {}", other.describe()))),
            };
            if m.params.insert(name.clone(), value).is_some() {
                return Err(Self::err_at(&name_tok, format!("parameter '{name}' set twice")));
            }
            if self.peek().tok == Tok::Comma {
                self.next();
            }
        }
    }
}
