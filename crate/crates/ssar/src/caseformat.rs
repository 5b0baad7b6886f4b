//! Text case documents: one file holds the network and the study settings.
//!
//! The layout is documented in `docs/case-format.md`. Key/value sections
//! (`[case]`, `[agc]`, `[uncertainty]`, `[tolerances]`) hold `key = value`
//! lines; table sections (`[buses]`, `[branches]`, `[loads]`, `[generators]`,
//! `[wind]`) start with a header line naming the columns.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use ssar_core::netcase::{
    AgcPolicy, Branch, Bus, BusId, ExciterParams, LoadSpec, NetworkCase, SgModel, SgSpec, StudyConfig, Tolerances,
    WindFarmSpec,
};
use ssar_core::uncertainty::{calibrate_marginal, BetaMarginal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}{}: {message}", field.as_ref().map(|f| format!(", field `{f}`")).unwrap_or_default())]
pub struct CaseFormatError {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

fn err(line: usize, field: Option<&str>, message: impl Into<String>) -> CaseFormatError {
    CaseFormatError { line, field: field.map(str::to_owned), message: message.into() }
}

const SECTIONS: [&str; 9] =
    ["case", "buses", "branches", "loads", "generators", "wind", "agc", "uncertainty", "tolerances"];

#[derive(Default)]
struct Section {
    header_line: usize,
    lines: Vec<(usize, String)>,
}

/// Whether a column carries a power quantity, which decides if `MW` is allowed.
#[derive(Clone, Copy, PartialEq)]
enum Quantity {
    Power,
    Plain,
}

fn parse_number(tok: &str, q: Quantity, base_mva: f64, line: usize, field: &str) -> Result<f64, CaseFormatError> {
    let lower = tok.to_ascii_lowercase();
    let (num, scale) = if let Some(n) = lower.strip_suffix("pu") {
        (n, 1.0)
    } else if let Some(n) = lower.strip_suffix("mvar").or_else(|| lower.strip_suffix("mw")) {
        if q != Quantity::Power {
            return Err(err(line, Some(field), format!("unit suffix not allowed on `{tok}`")));
        }
        (n, 1.0 / base_mva)
    } else {
        (lower.as_str(), 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| err(line, Some(field), format!("not a number: `{tok}`")))?;
    if !v.is_finite() {
        return Err(err(line, Some(field), format!("non-finite value `{tok}`")));
    }
    Ok(if scale == 1.0 { v } else { v * scale })
}

fn parse_uint<T: std::str::FromStr>(tok: &str, line: usize, field: &str) -> Result<T, CaseFormatError> {
    tok.parse().map_err(|_| err(line, Some(field), format!("not a non-negative integer: `{tok}`")))
}

struct Table<'a> {
    name: &'static str,
    columns: Vec<String>,
    rows: Vec<(usize, Vec<&'a str>)>,
}

struct Row<'t, 'a> {
    table: &'t Table<'a>,
    line: usize,
    cells: &'t [&'a str],
}

impl<'t, 'a> Row<'t, 'a> {
    fn get(&self, col: &str) -> Option<&'a str> {
        self.table.columns.iter().position(|c| c == col).map(|i| self.cells[i])
    }

    fn req(&self, col: &str) -> Result<&'a str, CaseFormatError> {
        self.get(col)
            .ok_or_else(|| err(self.line, Some(col), format!("missing required column in [{}]", self.table.name)))
    }

    fn num(&self, col: &str, q: Quantity, base: f64, default: Option<f64>) -> Result<f64, CaseFormatError> {
        match (self.get(col), default) {
            (Some(t), _) => parse_number(t, q, base, self.line, col),
            (None, Some(d)) => Ok(d),
            (None, None) => self.req(col).map(|_| 0.0),
        }
    }

    fn opt_num(&self, col: &str, q: Quantity, base: f64) -> Result<Option<f64>, CaseFormatError> {
        self.get(col).map(|t| parse_number(t, q, base, self.line, col)).transpose()
    }
}

fn table<'a>(
    name: &'static str,
    sec: Option<&'a Section>,
    allowed: &[&str],
    required: &[&str],
) -> Result<Table<'a>, CaseFormatError> {
    let Some(sec) = sec else {
        return Ok(Table { name, columns: Vec::new(), rows: Vec::new() });
    };
    let mut it = sec.lines.iter();
    let Some((hline, header)) = it.next() else {
        return Ok(Table { name, columns: Vec::new(), rows: Vec::new() });
    };
    let columns: Vec<String> = header.split_whitespace().map(str::to_owned).collect();
    for (i, c) in columns.iter().enumerate() {
        if !allowed.contains(&c.as_str()) {
            return Err(err(*hline, Some(c), format!("unknown column in [{name}]")));
        }
        if columns[..i].contains(c) {
            return Err(err(*hline, Some(c), format!("duplicate column in [{name}]")));
        }
    }
    for r in required {
        if !columns.iter().any(|c| c == r) {
            return Err(err(*hline, Some(r), format!("missing required column in [{name}]")));
        }
    }
    let mut rows = Vec::new();
    for (line, text) in it {
        let cells: Vec<&str> = text.split_whitespace().collect();
        if cells.len() != columns.len() {
            return Err(err(*line, None, format!("expected {} fields, found {}", columns.len(), cells.len())));
        }
        rows.push((*line, cells));
    }
    Ok(Table { name, columns, rows })
}

impl<'a> Table<'a> {
    fn rows(&self) -> impl Iterator<Item = Row<'_, 'a>> {
        self.rows.iter().map(move |(line, cells)| Row { table: self, line: *line, cells })
    }
}

fn key_values(sec: Option<&Section>, name: &str, allowed: &[&str]) -> Result<BTreeMap<String, (usize, String)>, CaseFormatError> {
    let mut out = BTreeMap::new();
    let Some(sec) = sec else { return Ok(out) };
    for (line, text) in &sec.lines {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| err(*line, None, format!("expected `key = value` in [{name}]")))?;
        let k = k.trim();
        if !allowed.contains(&k) {
            return Err(err(*line, Some(k), format!("unknown key in [{name}]")));
        }
        if out.insert(k.to_owned(), (*line, v.trim().to_owned())).is_some() {
            return Err(err(*line, Some(k), format!("duplicate key in [{name}]")));
        }
    }
    Ok(out)
}

fn text_name(tok: &str) -> String {
    if tok == "-" {
        String::new()
    } else {
        tok.to_owned()
    }
}

fn split_sections(text: &str) -> Result<BTreeMap<&'static str, Section>, CaseFormatError> {
    let mut sections: BTreeMap<&'static str, Section> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line, None, "unterminated section header"))?
                .trim();
            let known = SECTIONS
                .iter()
                .find(|s| **s == name)
                .ok_or_else(|| err(line, Some(name), "unknown section"))?;
            if sections.contains_key(known) {
                return Err(err(line, Some(name), "duplicate section"));
            }
            sections.insert(known, Section { header_line: line, lines: Vec::new() });
            current = Some(known);
            continue;
        }
        let Some(cur) = current else {
            return Err(err(line, None, "content before the first section header"));
        };
        sections.get_mut(cur).unwrap().lines.push((line, body.to_owned()));
    }
    Ok(sections)
}

/// Parses a case document. The result is not validated; see
/// [`ssar_core::netcase::validate_case`].
pub fn parse_case(text: &str) -> Result<(NetworkCase, StudyConfig), CaseFormatError> {
    let sections = split_sections(text)?;

    let kv = key_values(sections.get("case"), "case", &["name", "base_mva", "frequency_hz", "slack_bus"])?;
    let case_line = sections.get("case").map(|s| s.header_line).unwrap_or(0);
    let need = |key: &str| kv.get(key).ok_or_else(|| err(case_line, Some(key), "missing required key in [case]"));
    let (l, v) = need("base_mva")?;
    let v = v.to_ascii_lowercase();
    let base_mva = parse_number(v.strip_suffix("mva").unwrap_or(&v), Quantity::Plain, 1.0, *l, "base_mva")?;
    if !(base_mva > 0.0) {
        return Err(err(*l, Some("base_mva"), "must be positive"));
    }
    let (l, v) = need("slack_bus")?;
    let slack_bus: BusId = parse_uint(v, *l, "slack_bus")?;
    let frequency_hz = match kv.get("frequency_hz") {
        Some((l, v)) => parse_number(v, Quantity::Plain, base_mva, *l, "frequency_hz")?,
        None => 60.0,
    };
    let name = kv.get("name").map(|(_, v)| v.clone()).unwrap_or_default();
    let base = base_mva;
    use Quantity::*;

    let t = table("buses", sections.get("buses"), &["id", "name", "v_set", "g_shunt", "b_shunt"], &["id"])?;
    let mut buses = Vec::new();
    let mut seen = HashSet::new();
    for r in t.rows() {
        let id: BusId = parse_uint(r.req("id")?, r.line, "id")?;
        if !seen.insert(id) {
            return Err(err(r.line, Some("id"), format!("duplicate bus id {id}")));
        }
        buses.push(Bus {
            id,
            name: r.get("name").map(text_name).unwrap_or_default(),
            v_set: r.num("v_set", Plain, base, Some(1.0))?,
            g_shunt: r.num("g_shunt", Power, base, Some(0.0))?,
            b_shunt: r.num("b_shunt", Power, base, Some(0.0))?,
        });
    }

    let t = table("branches", sections.get("branches"), &["from", "to", "r", "x", "b", "tap"], &["from", "to", "x"])?;
    let mut branches = Vec::new();
    for r in t.rows() {
        let tap = r.num("tap", Plain, base, Some(1.0))?;
        branches.push(Branch {
            from: parse_uint(r.req("from")?, r.line, "from")?,
            to: parse_uint(r.req("to")?, r.line, "to")?,
            r: r.num("r", Plain, base, Some(0.0))?,
            x: r.num("x", Plain, base, None)?,
            b: r.num("b", Plain, base, Some(0.0))?,
            tap,
        });
    }

    let t = table("loads", sections.get("loads"), &["bus", "p", "q"], &["bus", "p"])?;
    let mut loads = Vec::new();
    for r in t.rows() {
        loads.push(LoadSpec {
            bus: parse_uint(r.req("bus")?, r.line, "bus")?,
            p: r.num("p", Power, base, None)?,
            q: r.num("q", Power, base, Some(0.0))?,
        });
    }

    const GEN_COLS: [&str; 18] = [
        "name", "bus", "model", "t_j", "d", "x_d", "x_q", "x_d_prime", "t_d0_prime", "k_a", "t_a", "t_b", "t_c", "t_r",
        "p_sched", "p_min", "p_max", "h",
    ];
    let t = table("generators", sections.get("generators"), &GEN_COLS, &["name", "bus", "model", "x_d_prime", "p_sched"])?;
    let mut generators: Vec<SgSpec> = Vec::new();
    let ex = ExciterParams::default();
    for r in t.rows() {
        let name = r.req("name")?.to_owned();
        if generators.iter().any(|g| g.name == name) {
            return Err(err(r.line, Some("name"), format!("duplicate generator name {name}")));
        }
        let model = match r.req("model")? {
            "classic" => SgModel::Classic,
            "third_order_exciter" => SgModel::ThirdOrderExciter,
            other => return Err(err(r.line, Some("model"), format!("unknown model `{other}`"))),
        };
        let t_j = match (r.opt_num("t_j", Plain, base)?, r.opt_num("h", Plain, base)?) {
            (Some(_), Some(_)) => return Err(err(r.line, Some("h"), "give either t_j or h, not both")),
            (Some(t), None) => t,
            (None, Some(h)) => 2.0 * h,
            (None, None) => return Err(err(r.line, Some("t_j"), "missing required column in [generators]")),
        };
        generators.push(SgSpec {
            name,
            bus: parse_uint(r.req("bus")?, r.line, "bus")?,
            model,
            t_j,
            d: r.num("d", Plain, base, Some(0.0))?,
            x_d: r.num("x_d", Plain, base, Some(1.0))?,
            x_q: r.num("x_q", Plain, base, Some(0.6))?,
            x_d_prime: r.num("x_d_prime", Plain, base, None)?,
            t_d0_prime: r.num("t_d0_prime", Plain, base, Some(6.0))?,
            exciter: ExciterParams {
                k_a: r.num("k_a", Plain, base, Some(ex.k_a))?,
                t_a: r.num("t_a", Plain, base, Some(ex.t_a))?,
                t_b: r.num("t_b", Plain, base, Some(ex.t_b))?,
                t_c: r.num("t_c", Plain, base, Some(ex.t_c))?,
                t_r: r.num("t_r", Plain, base, Some(ex.t_r))?,
            },
            p_sched: r.num("p_sched", Power, base, None)?,
            p_min: r.num("p_min", Power, base, Some(0.0))?,
            p_max: r.num("p_max", Power, base, Some(f64::MAX))?,
        });
    }

    const WIND_COLS: [&str; 11] = [
        "name", "bus", "capacity", "forecast", "power_factor", "shape_a", "shape_b", "lower", "upper", "sigma", "mean",
    ];
    let t = table("wind", sections.get("wind"), &WIND_COLS, &["name", "bus", "capacity", "forecast"])?;
    let has = |c: &str| t.columns.iter().any(|x| x == c);
    let shaped = has("shape_a") || has("shape_b");
    if shaped && (has("sigma") || has("mean")) {
        return Err(err(t.rows.first().map(|r| r.0).unwrap_or(0), Some("sigma"), "give either shape_a/shape_b or sigma"));
    }
    let mut wind_farms: Vec<WindFarmSpec> = Vec::new();
    for r in t.rows() {
        let name = r.req("name")?.to_owned();
        if wind_farms.iter().any(|w| w.name == name) {
            return Err(err(r.line, Some("name"), format!("duplicate wind farm name {name}")));
        }
        let capacity = r.num("capacity", Power, base, None)?;
        let forecast = r.num("forecast", Power, base, None)?;
        let lower = r.num("lower", Power, base, Some(-forecast))?;
        let upper = r.num("upper", Power, base, Some(capacity - forecast))?;
        let marginal = if shaped {
            BetaMarginal {
                shape_a: r.num("shape_a", Plain, base, None)?,
                shape_b: r.num("shape_b", Plain, base, None)?,
                lower,
                upper,
            }
        } else {
            let sigma = r.num("sigma", Power, base, None)?;
            let mean = r.num("mean", Power, base, Some(0.0))?;
            calibrate_marginal(mean, sigma, lower, upper).map_err(|e| err(r.line, Some("sigma"), e.to_string()))?
        };
        wind_farms.push(WindFarmSpec {
            name,
            bus: parse_uint(r.req("bus")?, r.line, "bus")?,
            capacity,
            forecast,
            power_factor: r.num("power_factor", Plain, base, Some(1.0))?,
            marginal,
        });
    }

    let kv = key_values(sections.get("agc"), "agc", &["gamma"])?;
    let agc_line = sections.get("agc").map(|s| s.header_line).unwrap_or(0);
    let (l, v) = kv.get("gamma").ok_or_else(|| err(agc_line, Some("gamma"), "missing required key in [agc]"))?;
    let gamma = v
        .split_whitespace()
        .map(|t| parse_number(t, Plain, base, *l, "gamma"))
        .collect::<Result<Vec<_>, _>>()?;

    let kv = key_values(sections.get("uncertainty"), "uncertainty", &["alpha_conf", "samples", "seed", "rank_corr"])?;
    let alpha_conf = match kv.get("alpha_conf") {
        Some((l, v)) => parse_number(v, Plain, base, *l, "alpha_conf")?,
        None => 0.95,
    };
    let sample_count = match kv.get("samples") {
        Some((l, v)) => parse_uint(v, *l, "samples")?,
        None => 10_000,
    };
    let seed = match kv.get("seed") {
        Some((l, v)) => Some(parse_uint(v, *l, "seed")?),
        None => None,
    };
    let n_w = wind_farms.len();
    let rank_corr = match kv.get("rank_corr") {
        Some((l, v)) => parse_matrix(v, *l)?,
        None => DMatrix::identity(n_w, n_w),
    };

    let mut tolerances = Tolerances::default();
    let names = tolerance_names();
    let kv = key_values(sections.get("tolerances"), "tolerances", &names)?;
    for (k, (l, v)) in &kv {
        if k == "pf_max_iter" {
            tolerances.pf_max_iter = parse_uint(v, *l, k)?;
        } else {
            *tolerance_mut(&mut tolerances, k).unwrap() = parse_number(v, Plain, base, *l, k)?;
        }
    }

    Ok((
        NetworkCase { name, base_mva, frequency_hz, slack_bus, buses, branches, loads, generators, wind_farms },
        StudyConfig { agc: AgcPolicy::new(gamma), alpha_conf, sample_count, seed, rank_corr, tolerances },
    ))
}

/// Rows separated by `;`, entries by whitespace.
pub fn parse_matrix(v: &str, line: usize) -> Result<DMatrix<f64>, CaseFormatError> {
    let rows: Vec<Vec<f64>> = v
        .split(';')
        .map(|r| {
            r.split_whitespace()
                .map(|t| parse_number(t, Quantity::Plain, 1.0, line, "rank_corr"))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(err(line, Some("rank_corr"), "matrix must be square with rows separated by `;`"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn tolerance_names() -> Vec<&'static str> {
    let mut v = vec!["pf_max_iter"];
    v.extend(FLOAT_TOLERANCES);
    v
}

const FLOAT_TOLERANCES: [&str; 14] = [
    "pf_tol",
    "eq_tol",
    "fd_check_tol",
    "sib_tol",
    "margin_tol",
    "eig_sep_tol",
    "sensitivity_step",
    "ray_tol",
    "ray_scan_step",
    "boundary_tol",
    "resid_cap",
    "trust_rel_err",
    "hopf_imag_tol",
    "beta_inv_tol",
];

fn tolerance_mut<'a>(t: &'a mut Tolerances, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "pf_tol" => &mut t.pf_tol,
        "eq_tol" => &mut t.eq_tol,
        "fd_check_tol" => &mut t.fd_check_tol,
        "sib_tol" => &mut t.sib_tol,
        "margin_tol" => &mut t.margin_tol,
        "eig_sep_tol" => &mut t.eig_sep_tol,
        "sensitivity_step" => &mut t.sensitivity_step,
        "ray_tol" => &mut t.ray_tol,
        "ray_scan_step" => &mut t.ray_scan_step,
        "boundary_tol" => &mut t.boundary_tol,
        "resid_cap" => &mut t.resid_cap,
        "trust_rel_err" => &mut t.trust_rel_err,
        "hopf_imag_tol" => &mut t.hopf_imag_tol,
        "beta_inv_tol" => &mut t.beta_inv_tol,
        _ => return None,
    })
}

/// All tolerances as `(name, value)` pairs, in document order.
pub fn tolerance_entries(t: &Tolerances) -> Vec<(&'static str, f64)> {
    let mut t = t.clone();
    let mut out = vec![("pf_max_iter", t.pf_max_iter as f64)];
    for k in FLOAT_TOLERANCES {
        out.push((k, *tolerance_mut(&mut t, k).unwrap()));
    }
    out
}

fn name_cell(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

/// Writes a document that [`parse_case`] maps back to identical values.
/// Floats use the shortest representation that round-trips exactly.
pub fn write_case(case: &NetworkCase, cfg: &StudyConfig) -> String {
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "[case]");
    if !case.name.is_empty() {
        let _ = writeln!(w, "name = {}", case.name);
    }
    let _ = writeln!(w, "base_mva = {:?}", case.base_mva);
    let _ = writeln!(w, "frequency_hz = {:?}", case.frequency_hz);
    let _ = writeln!(w, "slack_bus = {}", case.slack_bus);

    let _ = writeln!(w, "\n[buses]\nid name v_set g_shunt b_shunt");
    for b in &case.buses {
        let _ = writeln!(w, "{} {} {:?} {:?} {:?}", b.id, name_cell(&b.name), b.v_set, b.g_shunt, b.b_shunt);
    }
    let _ = writeln!(w, "\n[branches]\nfrom to r x b tap");
    for b in &case.branches {
        let _ = writeln!(w, "{} {} {:?} {:?} {:?} {:?}", b.from, b.to, b.r, b.x, b.b, b.tap);
    }
    let _ = writeln!(w, "\n[loads]\nbus p q");
    for l in &case.loads {
        let _ = writeln!(w, "{} {:?} {:?}", l.bus, l.p, l.q);
    }
    let _ = writeln!(
        w,
        "\n[generators]\nname bus model t_j d x_d x_q x_d_prime t_d0_prime k_a t_a t_b t_c t_r p_sched p_min p_max"
    );
    for g in &case.generators {
        let model = match g.model {
            SgModel::Classic => "classic",
            SgModel::ThirdOrderExciter => "third_order_exciter",
        };
        let e = &g.exciter;
        let _ = writeln!(
            w,
            "{} {} {model} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
            g.name, g.bus, g.t_j, g.d, g.x_d, g.x_q, g.x_d_prime, g.t_d0_prime, e.k_a, e.t_a, e.t_b, e.t_c, e.t_r,
            g.p_sched, g.p_min, g.p_max
        );
    }
    let _ = writeln!(w, "\n[wind]\nname bus capacity forecast power_factor shape_a shape_b lower upper");
    for f in &case.wind_farms {
        let m = &f.marginal;
        let _ = writeln!(
            w,
            "{} {} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
            f.name, f.bus, f.capacity, f.forecast, f.power_factor, m.shape_a, m.shape_b, m.lower, m.upper
        );
    }
    let gamma: Vec<String> = cfg.agc.gamma.iter().map(|g| format!("{g:?}")).collect();
    let _ = writeln!(w, "\n[agc]\ngamma = {}", gamma.join(" "));
    let _ = writeln!(w, "\n[uncertainty]\nalpha_conf = {:?}\nsamples = {}", cfg.alpha_conf, cfg.sample_count);
    if let Some(seed) = cfg.seed {
        let _ = writeln!(w, "seed = {seed}");
    }
    let rows: Vec<String> = cfg
        .rank_corr
        .row_iter()
        .map(|r| r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" "))
        .collect();
    if !rows.is_empty() {
        let _ = writeln!(w, "rank_corr = {}", rows.join(" ; "));
    }
    let _ = writeln!(w, "\n[tolerances]");
    for (k, v) in tolerance_entries(&cfg.tolerances) {
        if k == "pf_max_iter" {
            let _ = writeln!(w, "{k} = {}", cfg.tolerances.pf_max_iter);
        } else {
            let _ = writeln!(w, "{k} = {v:?}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[case]
base_mva = 100
slack_bus = 1
[buses]
id
1
2
[branches]
from to x
1 2 0.4
[generators]
name bus model t_j d x_d_prime p_sched
G 2 classic 6 1 0.3 80MW
[agc]
gamma = 1
";

    #[test]
    fn minimal_two_bus() {
        let (case, cfg) = parse_case(MINIMAL).unwrap();
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.branches.len(), 1);
        assert_eq!(case.generators[0].p_sched, 0.8);
        assert_eq!(cfg.agc.gamma, vec![1.0]);
        assert_eq!(cfg.rank_corr.nrows(), 0);
    }

    #[test]
    fn mw_on_impedance_is_rejected() {
        let bad = MINIMAL.replace("1 2 0.4", "1 2 40MW");
        let e = parse_case(&bad).unwrap_err();
        assert_eq!(e.line, 11);
        assert_eq!(e.field.as_deref(), Some("x"));
    }

    #[test]
    fn unknown_key_and_duplicate_id() {
        let e = parse_case(&MINIMAL.replace("slack_bus = 1", "slack_bus = 1\nfoo = 2")).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("foo"));
        let e = parse_case(&MINIMAL.replace("1\n2\n", "1\n1\n")).unwrap_err();
        assert!(e.message.contains("duplicate bus id"));
    }

    #[test]
    fn missing_required_field() {
        let e = parse_case(&MINIMAL.replace("slack_bus = 1\n", "")).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("slack_bus"));
        let e = parse_case(&MINIMAL.replace("from to x\n1 2 0.4", "from to\n1 2")).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("x"));
    }
}
