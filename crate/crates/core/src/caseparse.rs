//! Reader for MATPOWER-style `.m` case files.
//!
//! Only `baseMVA` and the `bus`, `gen` and `branch` matrices are consumed.
//! Other assignments (`gencost`, `bus_name`, `version`, ...) are skipped with
//! a warning. Rows are delimited by `;` alone, so a row may continue across
//! physical lines, and `%` starts a comment running to end of line.

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::netmodel::{Branch, Bus, BusKind, Generator, Network, NetworkError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("multiple slack buses: {0:?}")]
    MultipleSlack(Vec<u32>),
    #[error("no slack bus")]
    NoSlack,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticCode {
    SkippedBlock,
    PvWithoutGenerator,
    NoSlack,
    MultipleSlack,
    IsolatedBus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseDiagnostic {
    /// 1-based source line, when the diagnostic points into a file.
    pub line: Option<usize>,
    pub code: DiagnosticCode,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.line {
            Some(l) => write!(f, "{sev}: line {l}: {}", self.message),
            None => write!(f, "{sev}: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Num(f64),
    Str,
    Eq,
    Semi,
    Comma,
    Open(char),
    Close(char),
}

fn lex(text: &str) -> Result<VecDeque<(Tok, usize)>, ParseError> {
    let mut out = VecDeque::new();
    let mut chars = text.chars().peekable();
    let mut line = 1;
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            '%' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '\'' | '"' => {
                chars.next();
                for d in chars.by_ref() {
                    if d == c {
                        break;
                    }
                    if d == '\n' {
                        line += 1;
                        break;
                    }
                }
                out.push_back((Tok::Str, line));
            }
            '=' => {
                chars.next();
                out.push_back((Tok::Eq, line));
            }
            ';' => {
                chars.next();
                out.push_back((Tok::Semi, line));
            }
            ',' => {
                chars.next();
                out.push_back((Tok::Comma, line));
            }
            '[' | '{' | '(' => {
                chars.next();
                out.push_back((Tok::Open(c), line));
            }
            ']' | '}' | ')' => {
                chars.next();
                out.push_back((Tok::Close(c), line));
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut word = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_whitespace() || "%'\"=;,[]{}()".contains(d) {
                        break;
                    }
                    word.push(d);
                    chars.next();
                }
                let tok = match parse_number(&word) {
                    Some(v) => Tok::Num(v),
                    None => Tok::Word(word),
                };
                out.push_back((tok, line));
            }
        }
    }
    Ok(out)
}

fn parse_number(word: &str) -> Option<f64> {
    let first = word.chars().next()?;
    if !(first.is_ascii_digit() || matches!(first, '-' | '+' | '.')) {
        let lower = word.to_ascii_lowercase();
        return match lower.as_str() {
            "inf" => Some(f64::INFINITY),
            _ => None,
        };
    }
    match word.to_ascii_lowercase().as_str() {
        "-inf" => return Some(f64::NEG_INFINITY),
        "+inf" => return Some(f64::INFINITY),
        _ => {}
    }
    word.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug)]
struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Debug, Default)]
struct Sections {
    base_mva: Option<f64>,
    bus: Option<Vec<Row>>,
    gen: Option<Vec<Row>>,
    branch: Option<Vec<Row>>,
}

fn malformed(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::MalformedRow {
        line,
        message: message.into(),
    }
}

fn read_matrix(
    toks: &mut VecDeque<(Tok, usize)>,
    close: char,
    numeric: bool,
) -> Result<Vec<Row>, ParseError> {
    let mut rows = Vec::new();
    let mut current = Vec::new();
    let mut row_line = 0;
    let mut depth = 0;
    while let Some((tok, line)) = toks.pop_front() {
        match tok {
            Tok::Close(c) if depth == 0 => {
                if c != close {
                    return Err(malformed(line, format!("unexpected `{c}`")));
                }
                if !current.is_empty() {
                    rows.push(Row {
                        line: row_line,
                        values: std::mem::take(&mut current),
                    });
                }
                if matches!(toks.front(), Some((Tok::Semi, _))) {
                    toks.pop_front();
                }
                return Ok(rows);
            }
            Tok::Semi => {
                if !current.is_empty() {
                    rows.push(Row {
                        line: row_line,
                        values: std::mem::take(&mut current),
                    });
                }
            }
            Tok::Comma => {}
            Tok::Num(v) => {
                if current.is_empty() {
                    row_line = line;
                }
                current.push(v);
            }
            Tok::Open(_) if !numeric => depth += 1,
            Tok::Close(_) if !numeric => depth -= 1,
            Tok::Str | Tok::Word(_) | Tok::Eq | Tok::Open(_) | Tok::Close(_) => {
                if numeric {
                    let what = match tok {
                        Tok::Word(w) => format!("non-numeric token `{w}`"),
                        Tok::Str => "string literal in numeric matrix".to_string(),
                        _ => "unexpected token in matrix".to_string(),
                    };
                    return Err(malformed(line, what));
                }
            }
        }
    }
    Err(malformed(
        row_line.max(1),
        format!("unterminated matrix (missing `{close}`)"),
    ))
}

fn scan(text: &str) -> Result<(Sections, Vec<ParseDiagnostic>), ParseError> {
    let mut toks = lex(text)?;
    let mut sections = Sections::default();
    let mut diags = Vec::new();
    while let Some((tok, line)) = toks.pop_front() {
        let Tok::Word(name) = tok else { continue };
        let Some((_, field)) = name.split_once('.') else {
            continue;
        };
        if !matches!(toks.front(), Some((Tok::Eq, _))) {
            continue;
        }
        toks.pop_front();
        let field = field.to_string();
        let skip_warning = |diags: &mut Vec<ParseDiagnostic>| {
            diags.push(ParseDiagnostic {
                line: Some(line),
                code: DiagnosticCode::SkippedBlock,
                severity: Severity::Warning,
                message: format!("skipping unsupported field `{field}`"),
            })
        };
        match toks.pop_front() {
            Some((Tok::Num(v), l)) => {
                if field == "baseMVA" {
                    sections.base_mva = Some(v);
                } else {
                    skip_warning(&mut diags);
                }
                match toks.pop_front() {
                    Some((Tok::Semi, _)) | None => {}
                    Some((_, l2)) => return Err(malformed(l2.max(l), "expected `;`")),
                }
            }
            Some((Tok::Open('['), _)) => {
                let numeric = matches!(field.as_str(), "bus" | "gen" | "branch");
                let rows = read_matrix(&mut toks, ']', numeric)?;
                match field.as_str() {
                    "bus" => sections.bus = Some(rows),
                    "gen" => sections.gen = Some(rows),
                    "branch" => sections.branch = Some(rows),
                    _ => skip_warning(&mut diags),
                }
            }
            Some((Tok::Open('{'), _)) => {
                read_matrix(&mut toks, '}', false)?;
                skip_warning(&mut diags);
            }
            Some((_, l)) if field == "baseMVA" => {
                return Err(malformed(l, "baseMVA must be a number"));
            }
            Some(_) | None => skip_warning(&mut diags),
        }
    }
    Ok((sections, diags))
}

fn col(row: &Row, i: usize, default: f64) -> f64 {
    row.values.get(i).copied().unwrap_or(default)
}

fn check_width(rows: &[Row], block: &str, min: usize) -> Result<(), ParseError> {
    let Some(first) = rows.first() else {
        return Ok(());
    };
    let width = first.values.len();
    for r in rows {
        if r.values.len() < min {
            return Err(malformed(
                r.line,
                format!(
                    "{block} row has {} columns, at least {min} required",
                    r.values.len()
                ),
            ));
        }
        if r.values.len() != width {
            return Err(malformed(
                r.line,
                format!(
                    "{block} row has {} columns, previous rows have {width}",
                    r.values.len()
                ),
            ));
        }
    }
    Ok(())
}

fn as_id(v: f64, line: usize) -> Result<u32, ParseError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(malformed(line, format!("invalid bus id {v}")))
    }
}

/// Parses case text, also returning the warnings raised while reading it.
pub fn parse_case_with_diagnostics(
    text: &str,
) -> Result<(Network, Vec<ParseDiagnostic>), ParseError> {
    let (sections, mut diags) = scan(text)?;
    let base_mva = sections
        .base_mva
        .ok_or_else(|| ParseError::MissingSection("baseMVA".into()))?;
    let bus_rows = sections
        .bus
        .ok_or_else(|| ParseError::MissingSection("bus".into()))?;
    let branch_rows = sections
        .branch
        .ok_or_else(|| ParseError::MissingSection("branch".into()))?;
    let gen_rows = sections.gen.unwrap_or_default();

    check_width(&bus_rows, "bus", 9)?;
    check_width(&gen_rows, "gen", 2)?;
    check_width(&branch_rows, "branch", 4)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for r in &bus_rows {
        let id = as_id(r.values[0], r.line)?;
        let code = r.values[1];
        let kind = BusKind::from_code(code as i64)
            .filter(|_| code.fract() == 0.0)
            .ok_or_else(|| malformed(r.line, format!("unsupported bus type {code}")))?;
        buses.push(Bus {
            id,
            kind,
            p_demand: r.values[2],
            q_demand: r.values[3],
            shunt_g: r.values[4],
            shunt_b: r.values[5],
            v_init: r.values[7],
            a_init: r.values[8],
            v_max: col(r, 11, 1.1),
            v_min: col(r, 12, 0.9),
        });
    }

    let mut gens = Vec::with_capacity(gen_rows.len());
    for r in &gen_rows {
        gens.push(Generator {
            bus: as_id(r.values[0], r.line)?,
            p_gen: r.values[1],
            q_gen: col(r, 2, 0.0),
            q_max: col(r, 3, f64::INFINITY),
            q_min: col(r, 4, f64::NEG_INFINITY),
            v_set: col(r, 5, 1.0),
            status: col(r, 7, 1.0) > 0.0,
            p_max: col(r, 8, f64::INFINITY),
            p_min: col(r, 9, 0.0),
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for r in &branch_rows {
        let tap = col(r, 8, 0.0);
        branches.push(Branch {
            from_bus: as_id(r.values[0], r.line)?,
            to_bus: as_id(r.values[1], r.line)?,
            r: r.values[2],
            x: r.values[3],
            b_charge: col(r, 4, 0.0),
            rate_a: col(r, 5, 0.0),
            tap: if tap == 0.0 { 1.0 } else { tap },
            shift: col(r, 9, 0.0),
            status: col(r, 10, 1.0) > 0.0,
        });
    }

    let slacks: Vec<u32> = buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .map(|b| b.id)
        .collect();
    match slacks.len() {
        0 => return Err(ParseError::NoSlack),
        1 => {}
        _ => return Err(ParseError::MultipleSlack(slacks)),
    }

    // A PV bus with no generator in service cannot hold its voltage.
    for (b, r) in buses.iter_mut().zip(&bus_rows) {
        if b.kind == BusKind::PV && !gens.iter().any(|g| g.status && g.bus == b.id) {
            b.kind = BusKind::PQ;
            diags.push(ParseDiagnostic {
                line: Some(r.line),
                code: DiagnosticCode::PvWithoutGenerator,
                severity: Severity::Warning,
                message: format!("bus {} has no generator in service; treated as PQ", b.id),
            });
        }
    }

    let net = Network::new(base_mva, buses, branches, gens)?;
    Ok((net, diags))
}

pub fn parse_case(text: &str) -> Result<Network, ParseError> {
    parse_case_with_diagnostics(text).map(|(net, _)| net)
}

/// Checks slack uniqueness, PV regulation and connectivity. An empty result
/// means the network is ready for power flow.
pub fn validate(net: &Network) -> Vec<ParseDiagnostic> {
    let mut diags = Vec::new();
    let error = |code, message: String| ParseDiagnostic {
        line: None,
        code,
        severity: Severity::Error,
        message,
    };
    let slacks: Vec<usize> = net
        .buses()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.kind == BusKind::Slack)
        .map(|(i, _)| i)
        .collect();
    match slacks.len() {
        0 => diags.push(error(
            DiagnosticCode::NoSlack,
            "network has no slack bus".into(),
        )),
        1 => {}
        _ => diags.push(error(
            DiagnosticCode::MultipleSlack,
            format!(
                "network has {} slack buses: {:?}",
                slacks.len(),
                slacks
                    .iter()
                    .map(|&i| net.buses()[i].id)
                    .collect::<Vec<_>>()
            ),
        )),
    }
    let setpoints = net.voltage_setpoints();
    for (b, sp) in net.buses().iter().zip(&setpoints) {
        if b.kind == BusKind::PV && sp.is_none() {
            diags.push(error(
                DiagnosticCode::PvWithoutGenerator,
                format!("PV bus {} has no generator in service", b.id),
            ));
        }
    }

    let n = net.n_buses();
    let mut adj = vec![Vec::new(); n];
    for (k, br) in net.branches().iter().enumerate() {
        if br.status {
            let (f, t) = net.branch_ends(k);
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let root = slacks.first().copied().unwrap_or(0);
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    if n > 0 {
        seen[root] = true;
        stack.push(root);
    }
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    for (i, reached) in seen.iter().enumerate() {
        if !reached {
            diags.push(error(
                DiagnosticCode::IsolatedBus,
                format!(
                    "bus {} is not connected to the slack bus",
                    net.buses()[i].id
                ),
            ));
        }
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1.0 0 230 1 1.1 0.9;
  2 1 50 10 0 0 1 1.0 0 230 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 300 -300 1.02 100 1 250 10; ];
mpc.branch = [
  1 2 0.01 0.1 0.02 250 250 250 0 0 1 -360 360;
];
";

    const COMMENTED: &str = "% leading comment
function mpc = tiny
%% base
mpc.baseMVA   =   100;   % trailing
mpc.bus = [
% header row
  1	3	0	0	0	0	1	1.0	0	230	1	1.1	0.9;   % slack

  2 1 50 10 0 0 1 1.0 0 230 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 300 -300 1.02 100 1 250 10; ];
mpc.branch = [
  1 2 0.01 0.1
     0.02 250 250 250 0 0 1 -360 360;   % continued row
];
mpc.gencost = [ 2 0 0 3 0.1 1 0; ];
mpc.bus_name = { 'A;]'; 'B' };
";

    #[test]
    fn minimal_case() {
        let net = parse_case(MINIMAL).unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.n_branches(), 1);
        assert_eq!(net.base_mva(), 100.0);
        assert_eq!(net.buses()[0].kind, BusKind::Slack);
        assert_eq!(net.branches()[0].tap, 1.0);
        assert_eq!(net.gens()[0].v_set, 1.02);
    }

    #[test]
    fn comments_whitespace_and_continuation() {
        let (net, diags) = parse_case_with_diagnostics(COMMENTED).unwrap();
        assert_eq!(net, parse_case(MINIMAL).unwrap());
        let skipped: Vec<_> = diags
            .iter()
            .filter(|d| d.code == DiagnosticCode::SkippedBlock)
            .collect();
        assert_eq!(skipped.len(), 2);
        assert!(skipped.iter().all(|d| d.severity == Severity::Warning));
    }

    #[test]
    fn missing_bus_block() {
        let text = "mpc.baseMVA = 100;\nmpc.branch = [1 2 0 0.1;];\n";
        assert_eq!(
            parse_case(text).unwrap_err(),
            ParseError::MissingSection("bus".into())
        );
    }

    #[test]
    fn missing_base() {
        let text = MINIMAL.replace("mpc.baseMVA = 100;", "");
        assert_eq!(
            parse_case(&text).unwrap_err(),
            ParseError::MissingSection("baseMVA".into())
        );
    }

    #[test]
    fn non_numeric_token_reports_line() {
        let text = MINIMAL.replace("2 1 50 10", "2 1 fifty 10");
        match parse_case(&text).unwrap_err() {
            ParseError::MalformedRow { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("fifty"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let text = MINIMAL.replace(
            "2 1 50 10 0 0 1 1.0 0 230 1 1.1 0.9;",
            "2 1 50 10 0 0 1 1.0 0 230;",
        );
        assert!(matches!(
            parse_case(&text).unwrap_err(),
            ParseError::MalformedRow { line: 5, .. }
        ));
    }

    #[test]
    fn slack_count_errors() {
        let two = MINIMAL.replace("2 1 50 10", "2 3 50 10");
        assert!(
            matches!(parse_case(&two).unwrap_err(), ParseError::MultipleSlack(v) if v == vec![1, 2])
        );
        let none = MINIMAL.replace("1 3 0 0", "1 1 0 0");
        assert_eq!(parse_case(&none).unwrap_err(), ParseError::NoSlack);
    }

    #[test]
    fn exponent_and_integer_forms() {
        let text = MINIMAL.replace("0.01 0.1 0.02", "1e-2 1.0E-1 2e-2");
        assert_eq!(parse_case(&text).unwrap(), parse_case(MINIMAL).unwrap());
    }

    #[test]
    fn pv_without_generator_downgraded() {
        let text = MINIMAL.replace("2 1 50 10", "2 2 50 10");
        let (net, diags) = parse_case_with_diagnostics(&text).unwrap();
        assert_eq!(net.buses()[1].kind, BusKind::PQ);
        assert!(diags
            .iter()
            .any(|d| d.code == DiagnosticCode::PvWithoutGenerator));
    }

    #[test]
    fn isolated_bus_diagnosed() {
        let net = Network::new(
            100.0,
            vec![
                Bus::new(1, BusKind::Slack),
                Bus::new(2, BusKind::PQ),
                Bus::new(3, BusKind::PQ),
            ],
            vec![Branch::line(1, 2, 0.0, 0.1)],
            vec![Generator::new(1, 0.0, 1.0)],
        )
        .unwrap();
        let d = validate(&net);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagnosticCode::IsolatedBus);
        assert!(d[0].message.contains("bus 3"));
    }

    #[test]
    fn two_slacks_diagnosed() {
        let net = Network::new(
            100.0,
            vec![Bus::new(1, BusKind::Slack), Bus::new(2, BusKind::Slack)],
            vec![Branch::line(1, 2, 0.0, 0.1)],
            vec![Generator::new(1, 0.0, 1.0), Generator::new(2, 0.0, 1.0)],
        )
        .unwrap();
        let d = validate(&net);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagnosticCode::MultipleSlack);
    }

    #[test]
    fn valid_network_has_no_diagnostics() {
        assert!(validate(&parse_case(MINIMAL).unwrap()).is_empty());
    }
}
