//! CPLEX LP text format: a writer for [`MilpModel`] and a reader for the
//! subset it produces (space-separated tokens, one section keyword per line).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::milp::{Constraint, MilpModel, Objective, Relation, Sense, UnitVars, VarKind, Variable, GAMMA};

const SIGNIFICANT_DIGITS: usize = 12;
const LINE_WIDTH: usize = 100;

/// `%.12g`-style formatting.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "+inf".to_string() } else { "-inf".to_string() };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };
    if !(-4..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let m = trim_fraction(&format!("{}.{}", &digits[..1], &digits[1..]));
        return format!("{sign}{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let body = if exp >= 0 {
        let split = exp as usize + 1;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    format!("{sign}{}", trim_fraction(&body))
}

fn trim_fraction(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

struct Wrapped {
    text: String,
    line: usize,
}

impl Wrapped {
    fn start(&mut self, head: &str) {
        self.text.push_str(head);
        self.line = head.len();
    }

    fn push(&mut self, token: &str) {
        if self.line + 1 + token.len() > LINE_WIDTH {
            self.text.push_str("\n   ");
            self.line = 3;
        }
        self.text.push(' ');
        self.text.push_str(token);
        self.line += 1 + token.len();
    }

    fn end(&mut self) {
        self.text.push('\n');
        self.line = 0;
    }
}

fn push_terms(w: &mut Wrapped, model: &MilpModel, terms: &[(usize, f64)]) {
    for &(i, c) in terms {
        let sign = if c < 0.0 { "-" } else { "+" };
        w.push(&format!("{sign} {} {}", format_number(c.abs()), model.variables[i].name));
    }
}

pub fn write_lp(model: &MilpModel) -> String {
    let mut w = Wrapped {
        text: String::new(),
        line: 0,
    };
    w.text.push_str("\\ acdr cluster schedule\n");
    w.text.push_str(match model.objective.sense {
        Sense::Maximize => "Maximize\n",
        Sense::Minimize => "Minimize\n",
    });
    w.start(" obj:");
    push_terms(&mut w, model, &model.objective.terms);
    if model.objective.constant != 0.0 {
        let c = model.objective.constant;
        w.push(&format!("{} {}", if c < 0.0 { "-" } else { "+" }, format_number(c.abs())));
    }
    w.end();
    w.text.push_str("Subject To\n");
    for c in &model.constraints {
        w.start(&format!(" {}:", c.name));
        push_terms(&mut w, model, &c.terms);
        w.push(&format!("{} {}", c.relation.symbol(), format_number(c.rhs)));
        w.end();
    }
    w.text.push_str("Bounds\n");
    for v in &model.variables {
        let line = match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) if v.lower == v.upper => format!(" {} = {}", v.name, format_number(v.lower)),
            (true, true) => format!(" {} <= {} <= {}", format_number(v.lower), v.name, format_number(v.upper)),
            (true, false) => format!(" {} >= {}", v.name, format_number(v.lower)),
            (false, true) => format!(" -inf <= {} <= {}", v.name, format_number(v.upper)),
            (false, false) => format!(" {} free", v.name),
        };
        let _ = writeln!(w.text, "{line}");
    }
    w.text.push_str("Binaries\n");
    let binaries: Vec<&str> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    for chunk in binaries.chunks(8) {
        let _ = writeln!(w.text, " {}", chunk.join(" "));
    }
    w.text.push_str("End\n");
    w.text
}

pub fn export_lp(model: &MilpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_lp(model)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_lp(path: impl AsRef<Path>) -> Result<MilpModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_lp(&text)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    End,
}

fn section_keyword(line: &str) -> Option<Section> {
    match line.trim().to_ascii_lowercase().as_str() {
        "maximize" | "maximum" | "max" | "minimize" | "minimum" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
        "bounds" => Some(Section::Bounds),
        "binaries" | "binary" | "bin" => Some(Section::Binaries),
        "end" => Some(Section::End),
        _ => None,
    }
}

struct Token<'a> {
    text: &'a str,
    line: usize,
}

fn lp_error(line: usize, reason: impl Into<String>) -> Error {
    Error::LpFormat {
        line,
        reason: reason.into(),
    }
}

fn parse_number(tok: &Token) -> Result<f64> {
    match tok.text {
        "+inf" | "inf" | "+infinity" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        s => s
            .parse()
            .map_err(|_| lp_error(tok.line, format!("expected a number, found '{s}'"))),
    }
}

fn is_relation(s: &str) -> bool {
    matches!(s, "<=" | "=<" | "<" | ">=" | "=>" | ">" | "=")
}

fn relation(s: &str) -> Relation {
    match s {
        "<=" | "=<" | "<" => Relation::Le,
        ">=" | "=>" | ">" => Relation::Ge,
        _ => Relation::Eq,
    }
}

struct LinearExpr {
    terms: Vec<(String, f64)>,
    constant: f64,
}

/// Parses `[+|-] [coef] [name]` terms until a relation or the end.
fn parse_expr<'a>(tokens: &[Token<'a>], pos: &mut usize) -> Result<LinearExpr> {
    let mut expr = LinearExpr {
        terms: Vec::new(),
        constant: 0.0,
    };
    while *pos < tokens.len() && !is_relation(tokens[*pos].text) {
        let mut sign = 1.0;
        while *pos < tokens.len() && matches!(tokens[*pos].text, "+" | "-") {
            if tokens[*pos].text == "-" {
                sign = -sign;
            }
            *pos += 1;
        }
        let tok = tokens
            .get(*pos)
            .ok_or_else(|| lp_error(tokens[*pos - 1].line, "expression ends with a sign"))?;
        if let Ok(coef) = tok.text.parse::<f64>() {
            *pos += 1;
            match tokens.get(*pos) {
                Some(next) if !is_relation(next.text) && !matches!(next.text, "+" | "-") && next.text.parse::<f64>().is_err() => {
                    expr.terms.push((next.text.to_string(), sign * coef));
                    *pos += 1;
                }
                _ => expr.constant += sign * coef,
            }
        } else {
            expr.terms.push((tok.text.to_string(), sign));
            *pos += 1;
        }
    }
    Ok(expr)
}

pub fn parse_lp(text: &str) -> Result<MilpModel> {
    let mut section = Section::Preamble;
    let mut sense = Sense::Maximize;
    let mut blocks: HashMap<u8, Vec<Token>> = HashMap::new();
    let mut bound_lines = Vec::new();
    let mut binary_names = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some(next) = section_keyword(line) {
            if next == Section::Objective {
                sense = if line.trim().to_ascii_lowercase().starts_with("max") {
                    Sense::Maximize
                } else {
                    Sense::Minimize
                };
            }
            section = next;
            continue;
        }
        match section {
            Section::Preamble => return Err(lp_error(lineno, "content before the objective section")),
            Section::End => return Err(lp_error(lineno, "content after End")),
            Section::Objective | Section::Constraints => {
                let key = (section == Section::Constraints) as u8;
                blocks
                    .entry(key)
                    .or_default()
                    .extend(line.split_whitespace().map(|t| Token { text: t, line: lineno }));
            }
            Section::Bounds => bound_lines.push((lineno, line)),
            Section::Binaries => binary_names.extend(line.split_whitespace().map(str::to_string)),
        }
    }
    if section != Section::End {
        return Err(lp_error(text.lines().count(), "missing End"));
    }

    // variable order and bounds come from the Bounds section
    let mut variables: Vec<Variable> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in bound_lines {
        let toks: Vec<Token> = line.split_whitespace().map(|t| Token { text: t, line: lineno }).collect();
        let texts: Vec<&str> = toks.iter().map(|t| t.text).collect();
        let (name, lower, upper) = match texts.as_slice() {
            [_, "<=", name, "<=", _] => (*name, parse_number(&toks[0])?, parse_number(&toks[4])?),
            [name, ">=", _] => (*name, parse_number(&toks[2])?, f64::INFINITY),
            [name, "<=", _] => (*name, 0.0, parse_number(&toks[2])?),
            [name, "=", _] => {
                let v = parse_number(&toks[2])?;
                (*name, v, v)
            }
            [name, "free"] => (*name, f64::NEG_INFINITY, f64::INFINITY),
            _ => return Err(lp_error(lineno, format!("unrecognized bound '{}'", line.trim()))),
        };
        if index.insert(name.to_string(), variables.len()).is_some() {
            return Err(lp_error(lineno, format!("variable {name} bounded twice")));
        }
        variables.push(Variable {
            name: name.to_string(),
            kind: VarKind::Continuous,
            lower,
            upper,
        });
    }
    for name in &binary_names {
        let i = match index.get(name) {
            Some(&i) => i,
            None => {
                index.insert(name.clone(), variables.len());
                variables.push(Variable {
                    name: name.clone(),
                    kind: VarKind::Continuous,
                    lower: 0.0,
                    upper: 1.0,
                });
                variables.len() - 1
            }
        };
        let v = &mut variables[i];
        v.kind = VarKind::Binary;
        v.lower = v.lower.max(0.0);
        v.upper = v.upper.min(1.0);
    }

    let mut resolve = |terms: Vec<(String, f64)>, line: usize| -> Result<Vec<(usize, f64)>> {
        terms
            .into_iter()
            .map(|(name, c)| {
                let i = match index.get(&name) {
                    Some(&i) => i,
                    None => {
                        if name.parse::<f64>().is_ok() || is_relation(&name) {
                            return Err(lp_error(line, format!("unexpected token '{name}'")));
                        }
                        index.insert(name.clone(), variables.len());
                        variables.push(Variable {
                            name,
                            kind: VarKind::Continuous,
                            lower: 0.0,
                            upper: f64::INFINITY,
                        });
                        variables.len() - 1
                    }
                };
                Ok((i, c))
            })
            .collect()
    };

    let objective_tokens = blocks.remove(&0).unwrap_or_default();
    let mut pos = 0;
    if objective_tokens.first().is_some_and(|t| t.text.ends_with(':')) {
        pos = 1;
    }
    let obj_line = objective_tokens.first().map_or(0, |t| t.line);
    let obj = parse_expr(&objective_tokens, &mut pos)?;
    if pos != objective_tokens.len() {
        return Err(lp_error(objective_tokens[pos].line, "relation in objective"));
    }
    let objective = Objective {
        sense,
        constant: obj.constant,
        terms: resolve(obj.terms, obj_line)?,
    };

    let tokens = blocks.remove(&1).unwrap_or_default();
    let mut constraints = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        let line = tokens[pos].line;
        let name = if tokens[pos].text.ends_with(':') {
            pos += 1;
            tokens[pos - 1].text.trim_end_matches(':').to_string()
        } else {
            format!("R{}", constraints.len() + 1)
        };
        let expr = parse_expr(&tokens, &mut pos)?;
        let rel = tokens
            .get(pos)
            .ok_or_else(|| lp_error(line, format!("constraint {name} has no relation")))?;
        let relation = relation(rel.text);
        let rhs_tok = tokens
            .get(pos + 1)
            .ok_or_else(|| lp_error(rel.line, format!("constraint {name} has no right-hand side")))?;
        let rhs = parse_number(rhs_tok)? - expr.constant;
        pos += 2;
        constraints.push(Constraint {
            name,
            terms: resolve(expr.terms, line)?,
            relation,
            rhs,
        });
    }

    let (units, gamma) = rebuild_index(&variables);
    let model = MilpModel {
        variables,
        constraints,
        objective,
        units,
        gamma,
    };
    model.validate()?;
    Ok(model)
}

/// Recovers per-unit index maps from `prefix_g{id}_t{t}` names.
fn rebuild_index(variables: &[Variable]) -> (Vec<UnitVars>, Option<usize>) {
    let mut units: Vec<UnitVars> = Vec::new();
    let mut gamma = None;
    for (i, v) in variables.iter().enumerate() {
        if v.name == GAMMA {
            gamma = Some(i);
            continue;
        }
        let Some((prefix, rest)) = v.name.split_once("_g") else { continue };
        let Some((id, t)) = rest.split_once("_t") else { continue };
        let (Ok(id), Ok(t)) = (id.parse::<u64>(), t.parse::<usize>()) else { continue };
        let g = match units.iter().position(|u| u.unit_id == id) {
            Some(g) => g,
            None => {
                units.push(UnitVars {
                    unit_id: id,
                    ..Default::default()
                });
                units.len() - 1
            }
        };
        let slot = match prefix {
            "u" => &mut units[g].u,
            "y" => &mut units[g].y,
            "v" => &mut units[g].v,
            "th" => &mut units[g].theta,
            "d" => &mut units[g].d,
            _ => continue,
        };
        if slot.len() + 1 == t {
            slot.push(i);
        }
    }
    (units, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(123456.789), "123456.789");
        assert_eq!(format_number(0.0001), "0.0001");
        assert_eq!(format_number(0.00001234), "1.234e-05");
        assert_eq!(format_number(1e15), "1e+15");
        assert_eq!(format_number(999_999_999_999.6), "1e+12");
        assert_eq!(format_number(0.941_764_533_584_248_7), "0.941764533584");
        assert_eq!(format_number(f64::INFINITY), "+inf");
    }

    #[test]
    fn formatted_numbers_parse_back_to_twelve_digits() {
        for x in [std::f64::consts::PI, -1234.5678e-9, 6.02214076e23, 0.1 + 0.2] {
            let back: f64 = format_number(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-12);
        }
    }

    #[test]
    fn parses_hand_written_model() {
        let text = "\\ comment\nMaximize\n obj: + 2 x - 3 y + 1.5\nSubject To\n c1: + 1 x + 1 y <= 4\n c2: - 1 x\n    + 2 y >= -1\nBounds\n 0 <= x <= 10\n y >= 0\nBinaries\n y\nEnd\n";
        let m = parse_lp(text).unwrap();
        assert_eq!(m.variables.len(), 2);
        assert_eq!(m.variables[1].kind, VarKind::Binary);
        assert_eq!(m.objective.constant, 1.5);
        assert_eq!(m.objective.terms, vec![(0, 2.0), (1, -3.0)]);
        assert_eq!(m.constraints[1].terms, vec![(0, -1.0), (1, 2.0)]);
        assert_eq!(m.constraints[1].rhs, -1.0);
        assert_eq!(m.constraints[1].relation, Relation::Ge);
    }

    #[test]
    fn malformed_input_reports_line() {
        let text = "Maximize\n obj: + 1 x\nSubject To\n c1: + 1 x <=\nBounds\n x >= 0\nEnd\n";
        match parse_lp(text) {
            Err(Error::LpFormat { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected format error, got {other:?}"),
        }
        assert!(matches!(parse_lp("Maximize\n obj: + 1 x\n"), Err(Error::LpFormat { .. })));
    }
}
