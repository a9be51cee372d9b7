//! `mdrate` command line: instance documents, subcommands, rendering.
//!
//! Instance documents are line oriented. `#` starts a comment, blank lines
//! are ignored, matrices are whitespace-separated rows:
//!
//! ```text
//! N 1
//! L 2
//! Kx
//! 1.0
//! D 1
//! 0.5
//! D 2
//! 0.5
//! D0
//! 0.2
//! ```
//!
//! `N` and `L` come first, in that order. The `Kx`, `D i` and `D0` blocks
//! may follow in any order, each exactly once.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::bounds::individual_bound;
use crate::error::{Error, ParseError, ParseErrorKind};
use crate::instance::{ChannelDistortions, MdInstance};
use crate::kkt::{self, AuxNoise};
use crate::matcore::SymMatrix;
use crate::mc;
use crate::region::{self, RateRegion, TestChannel};
use crate::riccati::two_description_solve;
use crate::scalar::ScalarInstance;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_VERIFY_FAILED: i32 = 5;
pub const EXIT_INTERNAL: i32 = 6;

const SUBSET_NOTE: &str = "bitmask, lowest bit = description 1";

// ---------------------------------------------------------------------------
// instance documents

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

#[derive(Debug)]
struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
}

fn tokenize(text: &str) -> Vec<Line<'_>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let body = raw.split('#').next().unwrap_or("");
            let mut tokens = Vec::new();
            let mut start = None;
            for (pos, ch) in body.char_indices().chain(std::iter::once((body.len(), ' '))) {
                match (ch.is_whitespace(), start) {
                    (false, None) => start = Some(pos),
                    (true, Some(s)) => {
                        tokens.push(Token { text: &body[s..pos], column: body[..s].chars().count() + 1 });
                        start = None;
                    }
                    _ => {}
                }
            }
            (!tokens.is_empty()).then_some(Line { number: i + 1, tokens })
        })
        .collect()
}

fn perr(line: usize, column: usize, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
    ParseError { line, column, kind, message: message.into() }
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    perr(line, column, ParseErrorKind::Syntax, message)
}

fn header_count(line: &Line<'_>, key: &str) -> Result<usize, ParseError> {
    let head = line.tokens[0];
    if head.text != key {
        return Err(syntax(line.number, head.column, format!("expected `{key}`, found `{}`", head.text)));
    }
    match line.tokens.as_slice() {
        [_, value] => match value.text.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(syntax(
                line.number,
                value.column,
                format!("`{key}` needs a positive integer, found `{}`", value.text),
            )),
        },
        [_] => Err(syntax(line.number, head.column + key.len(), format!("`{key}` needs a value"))),
        [_, _, extra, ..] => Err(syntax(line.number, extra.column, format!("unexpected `{}`", extra.text))),
        [] => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Kx,
    D(usize),
    D0,
}

impl Block {
    fn name(self) -> String {
        match self {
            Block::Kx => "Kx".into(),
            Block::D(i) => format!("D{i}"),
            Block::D0 => "D0".into(),
        }
    }
}

fn block_header(line: &Line<'_>, l: usize) -> Result<Block, ParseError> {
    let head = line.tokens[0];
    let extra = |k: usize| -> Result<(), ParseError> {
        match line.tokens.get(k) {
            Some(t) => Err(syntax(line.number, t.column, format!("unexpected `{}`", t.text))),
            None => Ok(()),
        }
    };
    match head.text {
        "Kx" => extra(1).map(|_| Block::Kx),
        "D0" => extra(1).map(|_| Block::D0),
        "D" => {
            let Some(idx) = line.tokens.get(1) else {
                return Err(syntax(line.number, head.column + 1, "`D` needs a description index"));
            };
            extra(2)?;
            match idx.text.parse::<usize>() {
                Ok(i) if (1..=l).contains(&i) => Ok(Block::D(i)),
                _ => Err(perr(
                    line.number,
                    idx.column,
                    ParseErrorKind::Dimension,
                    format!("description index must be in 1..={l}, found `{}`", idx.text),
                )),
            }
        }
        other => Err(syntax(
            line.number,
            head.column,
            format!("expected `Kx`, `D <i>` or `D0`, found `{other}`"),
        )),
    }
}

/// Reads and validates an instance document.
pub fn parse_instance(text: &str) -> Result<MdInstance, ParseError> {
    let lines = tokenize(text);
    let eof_line = text.lines().count().max(1);
    let mut it = lines.iter().peekable();

    let n = header_count(it.next().ok_or_else(|| syntax(eof_line, 1, "empty document, expected `N`"))?, "N")?;
    let l = header_count(it.next().ok_or_else(|| syntax(eof_line, 1, "expected `L`"))?, "L")?;

    let mut kx: Option<(SymMatrix, usize)> = None;
    let mut d0: Option<(SymMatrix, usize)> = None;
    let mut d: Vec<Option<(SymMatrix, usize)>> = vec![None; l];

    while let Some(line) = it.next() {
        let block = block_header(line, l)?;
        let slot = match block {
            Block::Kx => &mut kx,
            Block::D0 => &mut d0,
            Block::D(i) => &mut d[i - 1],
        };
        if let Some((_, first)) = slot {
            return Err(syntax(
                line.number,
                1,
                format!("duplicate block {} (first declared on line {first})", block.name()),
            ));
        }
        let mut values = Vec::with_capacity(n * n);
        for row in 0..n {
            let Some(r) = it.next_if(|next| block_header(next, l).is_err()) else {
                let at = it.peek().map_or(eof_line, |next| next.number);
                return Err(syntax(
                    at,
                    1,
                    format!("block {} ends after {row} of {n} rows", block.name()),
                ));
            };
            if r.tokens.len() != n {
                let column = r.tokens.get(n).map_or_else(
                    || r.tokens.last().map_or(1, |t| t.column + t.text.len()),
                    |t| t.column,
                );
                return Err(perr(
                    r.number,
                    column,
                    ParseErrorKind::Dimension,
                    format!("row {} of {} has {} entries, expected {n}", row + 1, block.name(), r.tokens.len()),
                ));
            }
            for t in &r.tokens {
                let v: f64 = t
                    .text
                    .parse()
                    .map_err(|_| syntax(r.number, t.column, format!("`{}` is not a number", t.text)))?;
                values.push(v);
            }
        }
        let m = SymMatrix::from_row_slice(n, &values)
            .map_err(|e| syntax(line.number, 1, format!("block {}: {e}", block.name())))?;
        *slot = Some((m, line.number));
    }

    let take = |slot: Option<(SymMatrix, usize)>, name: String| {
        slot.ok_or_else(|| syntax(eof_line, 1, format!("missing block {name}")))
    };
    let (kx, kx_line) = take(kx, "Kx".into())?;
    let (d0, d0_line) = take(d0, "D0".into())?;
    let mut dl = Vec::with_capacity(l);
    let mut d_lines = Vec::with_capacity(l);
    for (i, slot) in d.into_iter().enumerate() {
        let (m, at) = take(slot, format!("D{}", i + 1))?;
        dl.push(m);
        d_lines.push(at);
    }

    let inst = MdInstance::new(kx, dl, d0).map_err(|e| syntax(eof_line, 1, e.to_string()))?;
    let report = inst.validate();
    if let Some(first) = report.violations.first() {
        // point at the later-declared block of the failed pair
        let line_of = |name: &str| match name {
            "Kx" => Some(kx_line),
            "D0" => Some(d0_line),
            _ => name.strip_prefix('D').and_then(|i| i.parse::<usize>().ok()).map(|i| d_lines[i - 1]),
        };
        let at = first
            .predicate
            .split(" ≺ ")
            .filter_map(line_of)
            .max()
            .unwrap_or(eof_line);
        let message = report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(perr(at, 1, ParseErrorKind::Ordering, message));
    }
    Ok(inst)
}

/// Writes an instance in the document grammar. Entries use the shortest
/// representation that reads back to the same `f64`.
pub fn format_instance(inst: &MdInstance) -> String {
    let n = inst.dim();
    let mut out = String::new();
    let matrix = |out: &mut String, header: String, m: &SymMatrix| {
        let _ = writeln!(out, "{header}");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| m.get(i, j).to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    };
    let _ = writeln!(out, "N {n}\nL {}", inst.descriptions());
    matrix(&mut out, "Kx".into(), &inst.kx);
    for (i, dl) in inst.d.iter().enumerate() {
        matrix(&mut out, format!("D {}", i + 1), dl);
    }
    matrix(&mut out, "D0".into(), &inst.d0);
    out
}

// ---------------------------------------------------------------------------
// commands

#[derive(Debug, Parser)]
#[command(name = "mdrate", version, about = "Vector Gaussian multiple-description sum rates and regions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Instance document, `-` for stdin.
    pub file: PathBuf,
    /// Report rates in bits instead of nats.
    #[arg(long)]
    pub bits: bool,
    /// Emit a flat JSON document.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sum rate, KKT case, optimal coupling and test channel.
    Sumrate(Common),
    /// Rate-region constraints and vertices. Exact for two descriptions,
    /// otherwise the region of the sum-rate optimal channel.
    Region(Common),
    /// Closed-form solution of a scalar instance.
    Scalar(Common),
    /// Two-description solution through the Riccati equation.
    Riccati(Common),
    /// Monte Carlo check of the distortions of the optimal channel.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative Frobenius tolerance; defaults to 3·N·L/√samples.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Permutation vertices of the sum-rate optimal channel's region.
    Vertices(Common),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Sumrate(c)
            | Command::Region(c)
            | Command::Scalar(c)
            | Command::Riccati(c)
            | Command::Vertices(c) => c,
            Command::Verify { common, .. } => common,
        }
    }
}

/// Failure of a command, with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Lib(Error),
    VerifyFailed(Map<String, Value>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => EXIT_INPUT,
            CliError::VerifyFailed(_) => EXIT_VERIFY_FAILED,
            CliError::Lib(e) => exit_code_of(e),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::VerifyFailed(_) => "verify_failed",
            CliError::Lib(e) => e.kind(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

pub fn exit_code_of(e: &Error) -> i32 {
    match e {
        Error::Parse(_)
        | Error::InvalidMatrix(_)
        | Error::Dimension(_)
        | Error::OrderingViolation(_)
        | Error::InvalidInstance(_)
        | Error::InvalidArgument(_)
        | Error::Unsupported(_) => EXIT_INPUT,
        Error::NotPsd { .. }
        | Error::NotPd { .. }
        | Error::Singular(_)
        | Error::DidNotConverge { .. }
        | Error::KktViolation(_) => EXIT_NUMERICAL,
        Error::TheoryViolation(_) | Error::Internal(_) => EXIT_INTERNAL,
    }
}

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn num(x: f64) -> Value {
    let r = round12(x);
    serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
}

fn mat(m: &SymMatrix) -> Value {
    Value::Array(m.to_rows().iter().map(|r| Value::Array(r.iter().map(|&x| num(x)).collect())).collect())
}

fn vec_num(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

struct Units {
    bits: bool,
}

impl Units {
    fn rate(&self, nats: f64) -> Value {
        num(if self.bits { nats / std::f64::consts::LN_2 } else { nats })
    }

    fn key(&self, stem: &str) -> String {
        format!("{stem}_{}", if self.bits { "bits" } else { "nats" })
    }
}

fn read_source(path: &PathBuf) -> Result<String, CliError> {
    let mut text = String::new();
    if path.as_os_str() == "-" {
        std::io::stdin().read_to_string(&mut text).map_err(|e| CliError::Io(format!("stdin: {e}")))?;
    } else {
        text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(text)
}

fn put_channel(doc: &mut Map<String, Value>, tc: &TestChannel, achieved: &ChannelDistortions) {
    for (i, kw) in tc.kw_blocks.iter().enumerate() {
        doc.insert(format!("Kw_block_{}", i + 1), mat(kw));
    }
    for (i, d) in achieved.individual.iter().enumerate() {
        doc.insert(format!("D_achieved_{}", i + 1), mat(d));
    }
    doc.insert("D0_achieved".into(), mat(&achieved.central));
}

fn put_kz(doc: &mut Map<String, Value>, kz: &AuxNoise) {
    match kz {
        AuxNoise::Finite(m) => {
            doc.insert("Kz".into(), mat(m));
        }
        AuxNoise::Unbounded { finite, directions } => {
            doc.insert("Kz".into(), mat(finite));
            doc.insert(
                "Kz_unbounded_directions".into(),
                Value::Array(directions.iter().map(|d| vec_num(d)).collect()),
            );
        }
    }
}

fn corners_value(units: &Units, corners: &[[f64; 2]; 2]) -> Value {
    Value::Array(corners.iter().map(|c| Value::Array(c.iter().map(|&r| units.rate(r)).collect())).collect())
}

fn put_region(doc: &mut Map<String, Value>, units: &Units, region: &RateRegion, constraints: bool) {
    doc.insert("subsets".into(), json!(SUBSET_NOTE));
    if constraints {
        let rows = region
            .constraints
            .iter()
            .map(|c| {
                let mut row = Map::new();
                row.insert("subset".into(), json!(c.subset.0));
                row.insert("members".into(), json!(c.subset.to_string()));
                row.insert("bound".into(), units.rate(c.bound));
                Value::Object(row)
            })
            .collect();
        doc.insert("constraints".into(), Value::Array(rows));
    }
    let rows = region
        .vertices
        .iter()
        .map(|v| {
            let mut row = Map::new();
            row.insert("order".into(), json!(v.order.iter().map(|l| l + 1).collect::<Vec<_>>()));
            for (l, &r) in v.rates.iter().enumerate() {
                row.insert(format!("R{}", l + 1), units.rate(r));
            }
            Value::Object(row)
        })
        .collect();
    doc.insert("vertices".into(), Value::Array(rows));
}

fn sumrate_doc(inst: &MdInstance, units: &Units) -> Result<Map<String, Value>, CliError> {
    let r = kkt::sum_rate(inst)?;
    let mut doc = Map::new();
    doc.insert(units.key("sum_rate"), units.rate(r.sum_rate.0));
    doc.insert("case".into(), json!(r.case.as_str()));
    doc.insert("A_star".into(), mat(&r.a_star));
    put_kz(&mut doc, &r.kz);
    put_channel(&mut doc, &r.channel, &r.achieved);
    if inst.descriptions() == 2 {
        let r1 = individual_bound(inst, 0)?.0;
        let r2 = individual_bound(inst, 1)?.0;
        let s = r.sum_rate.0;
        doc.insert("corners".into(), corners_value(units, &[[r1, s - r1], [s - r2, r2]]));
    }
    doc.insert("stationarity".into(), num(r.solution.stationarity));
    doc.insert("slackness".into(), num(r.solution.slackness));
    doc.insert("certified".into(), json!(r.solution.certified));
    Ok(doc)
}

fn region_doc(inst: &MdInstance, units: &Units, constraints: bool) -> Result<Map<String, Value>, CliError> {
    let mut doc = Map::new();
    let region = if constraints && inst.descriptions() == 2 {
        doc.insert("region".into(), json!("exact"));
        region::two_description_region(inst)?
    } else {
        let r = kkt::sum_rate(inst)?;
        doc.insert("region".into(), json!("optimal_channel"));
        region::channel_region(&inst.kx, &r.channel)?
    };
    put_region(&mut doc, units, &region, constraints);
    Ok(doc)
}

fn scalar_doc(inst: &MdInstance, units: &Units) -> Result<Map<String, Value>, CliError> {
    let s = ScalarInstance::from_instance(inst)?;
    let class = s.classify()?;
    let sol = s.solve()?;
    let mut doc = Map::new();
    doc.insert(units.key("sum_rate"), units.rate(sol.sum_rate.0));
    doc.insert("case".into(), json!(format!("{:?}", sol.case)));
    doc.insert("a_star".into(), num(sol.a_star));
    doc.insert("f_at_zero".into(), num(class.f_at_zero));
    doc.insert("f_at_top".into(), num(class.f_at_top));
    doc.insert("noise".into(), vec_num(&sol.noise));
    for (i, &d) in sol.achieved_d.iter().enumerate() {
        doc.insert(format!("D_achieved_{}", i + 1), num(d));
    }
    doc.insert("D0_achieved".into(), num(sol.achieved_d0));
    doc.insert("residual".into(), num(sol.residual));
    Ok(doc)
}

fn riccati_doc(inst: &MdInstance, units: &Units) -> Result<Map<String, Value>, CliError> {
    let sol = two_description_solve(inst)?;
    let mut doc = Map::new();
    doc.insert(units.key("sum_rate"), units.rate(sol.sum_rate.0));
    doc.insert("case".into(), json!(sol.path.label()));
    doc.insert(
        "path".into(),
        json!(match sol.path {
            crate::riccati::TwoDescriptionPath::Riccati => "riccati",
            crate::riccati::TwoDescriptionPath::ZeroCoupling => "zero_coupling",
            crate::riccati::TwoDescriptionPath::FullCoupling => "full_coupling",
            crate::riccati::TwoDescriptionPath::General(_) => "general",
        }),
    );
    doc.insert("interior_guaranteed".into(), json!(sol.sufficiency.interior_guaranteed));
    doc.insert("first_condition_min_eigenvalue".into(), num(sol.sufficiency.first_min_eigenvalue));
    doc.insert("second_condition_min_eigenvalue".into(), num(sol.sufficiency.second_min_eigenvalue));
    if let Some(r) = sol.riccati_residual {
        doc.insert("riccati_residual".into(), num(r));
    }
    doc.insert("A_star".into(), mat(&sol.channel.a));
    put_channel(&mut doc, &sol.channel, &sol.achieved);
    doc.insert("corners".into(), corners_value(units, &sol.corners));
    Ok(doc)
}

fn verify_doc(
    inst: &MdInstance,
    samples: usize,
    seed: u64,
    tol: Option<f64>,
) -> Result<Map<String, Value>, CliError> {
    let r = kkt::sum_rate(inst)?;
    let rep = mc::sample_verify(&inst.kx, &r.channel, samples, seed, tol)?;
    let mut doc = Map::new();
    doc.insert("pass".into(), json!(rep.pass));
    doc.insert("max_rel_err".into(), num(rep.max_rel_frobenius_error));
    doc.insert("tolerance".into(), num(rep.tolerance));
    doc.insert("n_samples".into(), json!(rep.n_samples));
    doc.insert("seed".into(), json!(rep.seed));
    doc.insert("rel_errors".into(), vec_num(&rep.rel_errors));
    if r.kz.finite().is_some() {
        let resid = mc::independence_check(&inst.kx, &r.channel, &r.channel.a)?;
        doc.insert("independence_residual".into(), num(resid));
    }
    for (i, d) in rep.empirical_dl.iter().enumerate() {
        doc.insert(format!("D_empirical_{}", i + 1), mat(d));
    }
    doc.insert("D0_empirical".into(), mat(&rep.empirical_d0));
    if rep.pass {
        Ok(doc)
    } else {
        Err(CliError::VerifyFailed(doc))
    }
}

/// Runs one parsed command and returns its document.
pub fn execute(cmd: &Command) -> Result<Map<String, Value>, CliError> {
    let common = cmd.common();
    let text = read_source(&common.file)?;
    let inst = parse_instance(&text).map_err(Error::from)?;
    let units = Units { bits: common.bits };
    match cmd {
        Command::Sumrate(_) => sumrate_doc(&inst, &units),
        Command::Region(_) => region_doc(&inst, &units, true),
        Command::Vertices(_) => region_doc(&inst, &units, false),
        Command::Scalar(_) => scalar_doc(&inst, &units),
        Command::Riccati(_) => riccati_doc(&inst, &units),
        Command::Verify { samples, seed, tol, .. } => verify_doc(&inst, *samples, *seed, *tol),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(cell).collect::<Vec<_>>().join(" "),
        other => other.to_string(),
    }
}

/// `key: value` lines. Arrays of records become CSV tables under their key.
pub fn render_text(doc: &Map<String, Value>) -> String {
    let mut out = String::new();
    for (key, value) in doc {
        match value {
            Value::Array(rows) if rows.first().is_some_and(Value::is_object) => {
                let _ = writeln!(out, "{key}:");
                if let Some(Value::Object(first)) = rows.first() {
                    let _ = writeln!(out, "{}", first.keys().cloned().collect::<Vec<_>>().join(","));
                }
                for row in rows {
                    if let Value::Object(r) = row {
                        let _ = writeln!(out, "{}", r.values().map(cell).collect::<Vec<_>>().join(","));
                    }
                }
            }
            Value::String(s) => {
                let _ = writeln!(out, "{key}: {s}");
            }
            other => {
                let _ = writeln!(out, "{key}: {other}");
            }
        }
    }
    out
}

fn error_doc(e: &CliError) -> Map<String, Value> {
    let mut doc = Map::new();
    doc.insert("error".into(), json!(e.kind()));
    let message = match e {
        CliError::Io(m) => m.clone(),
        CliError::Lib(err) => err.to_string(),
        CliError::VerifyFailed(_) => "empirical distortions outside tolerance".into(),
    };
    doc.insert("message".into(), json!(message));
    if let CliError::Lib(Error::Parse(p)) = e {
        doc.insert("line".into(), json!(p.line));
        doc.insert("column".into(), json!(p.column));
        doc.insert("parse_error".into(), json!(format!("{:?}", p.kind).to_lowercase()));
    }
    doc.insert("exit_code".into(), json!(e.exit_code()));
    doc
}

/// Parses `args` (program name first), runs the command and writes to `out`
/// and `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let json_out = cli.command.common().json;
    let emit = |out: &mut dyn Write, doc: &Map<String, Value>| {
        let _ = if json_out {
            writeln!(out, "{}", serde_json::to_string_pretty(doc).unwrap_or_default())
        } else {
            write!(out, "{}", render_text(doc))
        };
    };
    match execute(&cli.command) {
        Ok(doc) => {
            emit(out, &doc);
            EXIT_OK
        }
        Err(e) => {
            if let CliError::VerifyFailed(doc) = &e {
                emit(out, doc);
            }
            let edoc = error_doc(&e);
            if json_out {
                let _ = writeln!(err, "{}", serde_json::to_string(&edoc).unwrap_or_default());
            } else {
                let _ = writeln!(err, "error[{}]: {}", e.kind(), edoc["message"].as_str().unwrap_or(""));
            }
            e.exit_code()
        }
    }
}
