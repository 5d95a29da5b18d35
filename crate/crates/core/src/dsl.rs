//! Line-oriented `.srn` model files.
//!
//! ```text
//! # birth-death
//! parameter g = 10
//! parameter d = 1
//! 0 -> A @ mass_action(g)
//! A -> 0 @ mass_action(d)
//! init A = 0
//! ```
//!
//! Species are declared on first appearance. Parameters must be defined
//! before use. Rates are either `mass_action(<expr>)` with a species-free
//! argument or `expr(<expr>)` over parameters and already declared species.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::ParseError;
use crate::rate::RateExpr;
use crate::srn::{Model, RateLaw, Reaction};

type Side = Vec<(usize, u32)>;

const KEYWORDS: [&str; 4] = ["parameter", "init", "mass_action", "expr"];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number { value: f64, integral: bool },
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Arrow,
    At,
    Eq,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number { value, .. } => format!("number {value}"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::At => "`@`".into(),
            Tok::Eq => "`=`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    col: usize,
}

fn lex(line: &str, line_no: usize) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, message: String| ParseError { line: line_no, column: col, message };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Spanned { tok: Tok::Ident(chars[start..i].iter().collect()), col });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            let mut integral = true;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                integral = false;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text.parse().map_err(|_| err(col, format!("malformed number `{text}`")))?;
            out.push(Spanned { tok: Tok::Number { value, integral }, col });
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' if chars.get(i + 1) == Some(&'>') => {
                i += 1;
                Tok::Arrow
            }
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '@' => Tok::At,
            '=' => Tok::Eq,
            other => return Err(err(col, format!("unexpected character `{other}`"))),
        };
        i += 1;
        out.push(Spanned { tok, col });
    }
    Ok(out)
}

#[derive(Default)]
struct Builder {
    species: Vec<String>,
    species_index: HashMap<String, usize>,
    params: Vec<(String, f64)>,
    param_index: HashMap<String, usize>,
    init: HashMap<usize, i64>,
    // sparse (species, count) lists; densified once all species are known
    reactions: Vec<(Side, Side, RateLaw)>,
}

impl Builder {
    fn declare_species(&mut self, name: &str) -> Option<usize> {
        if self.param_index.contains_key(name) {
            return None;
        }
        if let Some(&i) = self.species_index.get(name) {
            return Some(i);
        }
        let i = self.species.len();
        self.species.push(name.to_string());
        self.species_index.insert(name.to_string(), i);
        Some(i)
    }
}

struct LineParser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    line: usize,
    line_len: usize,
}

impl<'a> LineParser<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.line_len + 1, |s| s.col)
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: self.col(), message: message.into() }
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error_here(format!("expected {what}, found {}", t.describe()))),
            None => Err(self.error_here(format!("expected {what}, found end of line"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, usize), ParseError> {
        let col = self.col();
        match self.peek() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok((s.clone(), col))
            }
            Some(t) => Err(self.error_here(format!("expected {what}, found {}", t.describe()))),
            None => Err(self.error_here(format!("expected {what}, found end of line"))),
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.error_here(format!("unexpected {} after end of statement", t.describe()))),
        }
    }
}

/// Identifier resolution inside rate expressions.
#[derive(Clone, Copy, PartialEq)]
enum Scope {
    ParamsOnly,
    ParamsAndSpecies,
}

fn parse_expr(p: &mut LineParser<'_>, b: &Builder, scope: Scope) -> Result<RateExpr, ParseError> {
    let mut lhs = parse_term(p, b, scope)?;
    loop {
        match p.peek() {
            Some(Tok::Plus) => {
                p.pos += 1;
                lhs = RateExpr::add(lhs, parse_term(p, b, scope)?);
            }
            Some(Tok::Minus) => {
                p.pos += 1;
                lhs = RateExpr::sub(lhs, parse_term(p, b, scope)?);
            }
            _ => return Ok(lhs),
        }
    }
}

fn parse_term(p: &mut LineParser<'_>, b: &Builder, scope: Scope) -> Result<RateExpr, ParseError> {
    let mut lhs = parse_unary(p, b, scope)?;
    loop {
        match p.peek() {
            Some(Tok::Star) => {
                p.pos += 1;
                lhs = RateExpr::mul(lhs, parse_unary(p, b, scope)?);
            }
            Some(Tok::Slash) => {
                p.pos += 1;
                lhs = RateExpr::div(lhs, parse_unary(p, b, scope)?);
            }
            _ => return Ok(lhs),
        }
    }
}

fn parse_unary(p: &mut LineParser<'_>, b: &Builder, scope: Scope) -> Result<RateExpr, ParseError> {
    if p.peek() == Some(&Tok::Minus) {
        p.pos += 1;
        // a sign directly on a literal folds into the constant
        if let Some(Tok::Number { value, .. }) = p.peek() {
            p.pos += 1;
            return parse_power(p, RateExpr::Const(-value));
        }
        return Ok(RateExpr::neg(parse_unary(p, b, scope)?));
    }
    let base = parse_primary(p, b, scope)?;
    parse_power(p, base)
}

fn parse_power(p: &mut LineParser<'_>, base: RateExpr) -> Result<RateExpr, ParseError> {
    if p.peek() != Some(&Tok::Caret) {
        return Ok(base);
    }
    p.pos += 1;
    let negative = if p.peek() == Some(&Tok::Minus) {
        p.pos += 1;
        true
    } else {
        false
    };
    match p.peek() {
        Some(Tok::Number { value, integral: true }) if *value <= f64::from(i32::MAX) => {
            p.pos += 1;
            let k = *value as i32;
            Ok(RateExpr::pow(base, if negative { -k } else { k }))
        }
        _ => Err(p.error_here("exponent must be an integer literal")),
    }
}

fn parse_primary(p: &mut LineParser<'_>, b: &Builder, scope: Scope) -> Result<RateExpr, ParseError> {
    let col = p.col();
    match p.next() {
        Some(Tok::Number { value, .. }) => Ok(RateExpr::Const(*value)),
        Some(Tok::Ident(name)) => {
            if let Some(&i) = b.param_index.get(name) {
                return Ok(RateExpr::Param(i));
            }
            if scope == Scope::ParamsAndSpecies {
                if let Some(&i) = b.species_index.get(name) {
                    return Ok(RateExpr::Species(i));
                }
                return Err(ParseError { line: p.line, column: col, message: format!("unknown identifier `{name}`") });
            }
            let message = if b.species_index.contains_key(name) {
                format!("mass_action argument must not reference species `{name}`")
            } else {
                format!("unknown parameter `{name}`")
            };
            Err(ParseError { line: p.line, column: col, message })
        }
        Some(Tok::LParen) => {
            let e = parse_expr(p, b, scope)?;
            p.expect(&Tok::RParen, "`)`")?;
            Ok(e)
        }
        Some(t) => {
            Err(ParseError { line: p.line, column: col, message: format!("unexpected {} in expression", t.describe()) })
        }
        None => Err(ParseError { line: p.line, column: col, message: "expression ends unexpectedly".into() }),
    }
}

fn parse_side(p: &mut LineParser<'_>, b: &mut Builder) -> Result<Vec<(usize, u32)>, ParseError> {
    if let Some(Tok::Number { value, .. }) = p.peek() {
        if *value == 0.0 && !matches!(p.toks.get(p.pos + 1).map(|s| &s.tok), Some(Tok::Ident(_))) {
            p.pos += 1;
            return Ok(Vec::new());
        }
    }
    let mut terms: Vec<(usize, u32)> = Vec::new();
    loop {
        let mut count = 1u32;
        if let Some(Tok::Number { value, integral }) = p.peek() {
            if !integral || value.fract() != 0.0 {
                return Err(p.error_here(format!("non-integer stoichiometry {value}")));
            }
            if *value < 1.0 || *value > f64::from(u16::MAX) {
                return Err(p.error_here(format!("stoichiometry {value} out of range")));
            }
            count = *value as u32;
            p.pos += 1;
        }
        let name_col = p.col();
        let name = match p.peek() {
            Some(Tok::Ident(name)) => name.clone(),
            _ => return Err(p.error_here("expected a species name")),
        };
        p.pos += 1;
        if KEYWORDS.contains(&name.as_str()) {
            return Err(ParseError { line: p.line, column: name_col, message: format!("`{name}` is reserved") });
        }
        let idx = b.declare_species(&name).ok_or_else(|| ParseError {
            line: p.line,
            column: name_col,
            message: format!("`{name}` is a parameter, not a species"),
        })?;
        match terms.iter_mut().find(|(s, _)| *s == idx) {
            Some((_, c)) => *c += count,
            None => terms.push((idx, count)),
        }
        if p.peek() != Some(&Tok::Plus) {
            return Ok(terms);
        }
        let plus_col = p.col();
        p.pos += 1;
        match p.peek() {
            Some(Tok::Ident(_)) | Some(Tok::Number { .. }) => {}
            _ => {
                return Err(ParseError {
                    line: p.line,
                    column: plus_col,
                    message: "dangling `+` without a following species".into(),
                })
            }
        }
    }
}

fn parse_line(p: &mut LineParser<'_>, b: &mut Builder) -> Result<(), ParseError> {
    match p.peek() {
        Some(Tok::Ident(kw)) if kw == "parameter" => {
            p.pos += 1;
            let (name, col) = p.expect_ident("parameter name")?;
            p.expect(&Tok::Eq, "`=`")?;
            let negative = if p.peek() == Some(&Tok::Minus) {
                p.pos += 1;
                true
            } else {
                false
            };
            let value = match p.next() {
                Some(Tok::Number { value, .. }) => *value,
                _ => return Err(p.error_here("expected a number")),
            };
            p.expect_end()?;
            let at = |message: String| ParseError { line: p.line, column: col, message };
            if KEYWORDS.contains(&name.as_str()) {
                return Err(at(format!("`{name}` is reserved")));
            }
            if b.param_index.contains_key(&name) {
                return Err(at(format!("duplicate parameter `{name}`")));
            }
            if b.species_index.contains_key(&name) {
                return Err(at(format!("`{name}` is already a species")));
            }
            b.param_index.insert(name.clone(), b.params.len());
            b.params.push((name, if negative { -value } else { value }));
            Ok(())
        }
        Some(Tok::Ident(kw)) if kw == "init" => {
            p.pos += 1;
            let (name, col) = p.expect_ident("species name")?;
            p.expect(&Tok::Eq, "`=`")?;
            let count = match p.peek() {
                Some(Tok::Number { value, integral: true }) if *value <= i64::MAX as f64 => *value as i64,
                _ => return Err(p.error_here("expected a non-negative integer count")),
            };
            p.pos += 1;
            p.expect_end()?;
            let at = |message: String| ParseError { line: p.line, column: col, message };
            if KEYWORDS.contains(&name.as_str()) {
                return Err(at(format!("`{name}` is reserved")));
            }
            let idx = b.declare_species(&name).ok_or_else(|| at(format!("`{name}` is a parameter, not a species")))?;
            if b.init.insert(idx, count).is_some() {
                return Err(at(format!("duplicate init for `{name}`")));
            }
            Ok(())
        }
        Some(_) => {
            let reactants = parse_side(p, b)?;
            p.expect(&Tok::Arrow, "`->`")?;
            let products = parse_side(p, b)?;
            if reactants.is_empty() && products.is_empty() {
                return Err(p.error_here("reaction without reactants or products"));
            }
            p.expect(&Tok::At, "`@` before the rate")?;
            let (kind, col) = p.expect_ident("`mass_action` or `expr`")?;
            let scope = match kind.as_str() {
                "mass_action" => Scope::ParamsOnly,
                "expr" => Scope::ParamsAndSpecies,
                other => {
                    return Err(ParseError {
                        line: p.line,
                        column: col,
                        message: format!("unknown rate law `{other}`; expected `mass_action` or `expr`"),
                    })
                }
            };
            p.expect(&Tok::LParen, "`(`")?;
            let e = parse_expr(p, b, scope)?;
            p.expect(&Tok::RParen, "`)`")?;
            p.expect_end()?;
            let rate = if scope == Scope::ParamsOnly { RateLaw::MassAction(e) } else { RateLaw::Expr(e) };
            b.reactions.push((reactants, products, rate));
            Ok(())
        }
        None => Ok(()),
    }
}

/// Parses and validates a model file.
pub fn parse_model(source: &str) -> Result<Model, ParseError> {
    let mut b = Builder::default();
    let mut last_line = 0;
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let toks = lex(line, line_no)?;
        let mut p = LineParser { toks: &toks, pos: 0, line: line_no, line_len: line.chars().count() };
        parse_line(&mut p, &mut b)?;
    }
    let n = b.species.len();
    let dense = |terms: &[(usize, u32)]| {
        let mut v = vec![0u32; n];
        for &(s, c) in terms {
            v[s] = c;
        }
        v
    };
    let reactions = b
        .reactions
        .iter()
        .map(|(r, p, rate)| Reaction { reactants: dense(r), products: dense(p), rate: rate.clone() })
        .collect();
    let init = (0..n).map(|i| b.init.get(&i).copied().unwrap_or(0)).collect();
    Model::new(b.species, b.params, reactions, init).map_err(|e| ParseError {
        line: last_line.max(1),
        column: 1,
        message: format!("invalid model: {e}"),
    })
}

fn format_side(out: &mut String, counts: &[u32], species: &[String]) {
    let mut first = true;
    for (s, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        if !first {
            out.push_str(" + ");
        }
        first = false;
        if c > 1 {
            let _ = write!(out, "{c} ");
        }
        out.push_str(&species[s]);
    }
    if first {
        out.push('0');
    }
}

/// Pretty-prints a model in the file format; re-parsing yields an equal model.
pub fn to_srn(model: &Model) -> String {
    let species = model.species();
    let params = model.parameter_names();
    let mut out = String::new();
    for (name, value) in model.parameters() {
        let _ = writeln!(out, "parameter {name} = {value:?}");
    }
    for (name, count) in species.iter().zip(model.initial_state()) {
        let _ = writeln!(out, "init {name} = {count}");
    }
    for r in model.reactions() {
        format_side(&mut out, &r.reactants, species);
        out.push_str(" -> ");
        format_side(&mut out, &r.products, species);
        let _ = match &r.rate {
            RateLaw::MassAction(e) => writeln!(out, " @ mass_action({})", e.display(species, &params)),
            RateLaw::Expr(e) => writeln!(out, " @ expr({})", e.display(species, &params)),
        };
    }
    out
}
