//! The five subcommands.

use std::path::PathBuf;

use hidden_gibbs::oracle::{
    oracle_cylinder, oracle_lumped_chain, oracle_pushforward, oracle_stationary, OracleConfig,
    OracleMeasure,
};
use hidden_gibbs::{
    approximant, enumerate_words, gibbs_check_pushforward, log_linear_slope, pressure_gap_bound,
    pressure_periodic, pressure_trace, r_star, schedule_n, variation_report, AmalgamationMap,
    Constants, DecayClass, InducedPotentialEvaluator, InducedValue, LocallyConstantPotential,
    MarkovGibbsMeasure, PushforwardMeasure, VariationBoundedPotential, VariationReport, Word,
    DEFAULT_ENUMERATION_CAP,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{fmt_f64, num, Artifacts, Table};
use crate::spec::{self, Potential, Problem};
use crate::{CliError, Command, Options};

/// Word length tabulated when the spec lists neither words nor a length.
const DEFAULT_WORD_LENGTH: usize = 4;
/// Agreement required between pipeline and oracle logarithms.
const VERIFY_TOL: f64 = 1e-10;
/// Longest period used for trace-vs-enumeration pressure checks.
const PRESSURE_PERIOD: usize = 8;

pub fn run(cmd: Command, opts: &Options) -> Result<(), CliError> {
    let path = opts
        .spec
        .as_ref()
        .ok_or_else(|| CliError::Validation("--spec PATH is required".into()))?;
    let problem = spec::load(path)?;
    let ctx = Context::new(problem, opts)?;
    let mut out = Artifacts::default();
    let mismatch = match cmd {
        Command::Measure => measure(&ctx, &mut out)?,
        Command::Pushforward => pushforward(&ctx, &mut out)?,
        Command::Induced => induced(&ctx, &mut out)?,
        Command::Verify => verify(&ctx, &mut out)?,
        Command::Report => report(&ctx, &mut out)?,
    };
    let dir = opts.out.clone().or_else(|| ctx.problem.out_dir.as_ref().map(PathBuf::from));
    out.emit(dir.as_deref())?;
    match mismatch {
        Some(msg) => Err(CliError::VerifyMismatch(msg)),
        None => Ok(()),
    }
}

/// A spec combined with the command-line overrides.
struct Context {
    problem: Problem,
    r: Option<usize>,
    n: Option<usize>,
    tol: Option<f64>,
    delta: f64,
    verify: bool,
    log2: bool,
    cap: u64,
}

impl Context {
    fn new(problem: Problem, opts: &Options) -> Result<Self, CliError> {
        let tol = opts.tol.or(problem.tol);
        if let Some(t) = tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Validation(format!("--tol must be positive, got {t}")));
            }
        }
        let delta = opts.delta.unwrap_or(problem.delta);
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(CliError::Validation(format!("--delta must be positive, got {delta}")));
        }
        if opts.r == Some(0) || problem.r == Some(0) {
            return Err(CliError::Validation("r must be at least 1".into()));
        }
        if opts.cap == Some(0) {
            return Err(CliError::Validation("--cap must be positive".into()));
        }
        Ok(Self {
            r: opts.r.or(problem.r),
            n: opts.n.or(problem.n),
            tol,
            delta,
            verify: opts.verify,
            log2: opts.log2,
            cap: opts.cap.unwrap_or(DEFAULT_ENUMERATION_CAP),
            problem,
        })
    }

    /// Natural log to the output base.
    fn log(&self, x: f64) -> f64 {
        if self.log2 {
            x / std::f64::consts::LN_2
        } else {
            x
        }
    }

    fn log_column(&self, stem: &str) -> String {
        if self.log2 {
            format!("log2_{stem}")
        } else {
            format!("log_{stem}")
        }
    }

    fn base(&self) -> &'static str {
        if self.log2 {
            "2"
        } else {
            "e"
        }
    }

    fn map(&self) -> Result<&AmalgamationMap, CliError> {
        self.problem.map.as_ref().ok_or_else(|| {
            CliError::Validation("this command needs target_alphabet and amalgamation".into())
        })
    }

    /// The locally constant potential actually run, with `var_r` when it is
    /// an approximant of a general potential.
    fn local_potential(&self) -> Result<(LocallyConstantPotential, Option<f64>), CliError> {
        match &self.problem.potential {
            Potential::Local(pot) => {
                let range = pot.range();
                match self.r {
                    None => Ok((pot.clone(), None)),
                    Some(r) if r < range => Err(CliError::Validation(format!(
                        "r = {r} is below the range {range} of the potential"
                    ))),
                    Some(r) => Ok((pot.with_range(r)?, None)),
                }
            }
            Potential::General(psi) => {
                let r = self.r.unwrap_or(2);
                let pot = approximant(psi, r, self.cap)?;
                Ok((pot, Some(psi.var_bound(r))))
            }
        }
    }

    fn general_potential(&self) -> Result<VariationBoundedPotential, CliError> {
        Ok(match &self.problem.potential {
            Potential::General(psi) => psi.clone(),
            Potential::Local(pot) => VariationBoundedPotential::from_locally_constant(pot)?,
        })
    }

    fn words(&self, alphabet: &hidden_gibbs::Alphabet) -> Result<Vec<Word>, CliError> {
        match &self.problem.words {
            Some(list) => list
                .iter()
                .map(|w| Word::parse(alphabet, w, &self.problem.separator).map_err(CliError::from))
                .collect(),
            None => {
                let len = self.problem.word_length.unwrap_or(DEFAULT_WORD_LENGTH);
                Ok(enumerate_words(alphabet, len, self.cap)?)
            }
        }
    }

    fn render(&self, w: &Word) -> String {
        w.render(&self.problem.separator)
    }

    fn evaluator(&self) -> Result<InducedPotentialEvaluator, CliError> {
        let map = self.map()?;
        match self.tol {
            Some(tol) => {
                let psi = self.general_potential()?;
                Ok(InducedPotentialEvaluator::double_limit(&psi, map, tol, self.delta, self.cap)?)
            }
            None => {
                let (pot, _) = self.local_potential()?;
                let r = pot.range();
                let n = self.n.unwrap_or_else(|| schedule_n(r, self.delta));
                if n <= r {
                    return Err(CliError::Validation(format!("n = {n} must exceed r = {r}")));
                }
                let pf = PushforwardMeasure::new(&pot, map)?;
                Ok(InducedPotentialEvaluator::exact_r(pf, n)?)
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

fn constants_json(c: &Constants) -> Value {
    json!({
        "card": c.card,
        "sup_norm": num(c.sup_norm),
        "s_psi": num(c.s_psi),
        "theta": num(c.theta),
        "c0": num(c.c0),
        "c1": num(c.c1),
        "c": num(c.c),
        "d1": num(c.d1),
        "d": num(c.d),
    })
}

fn perron_json(m: &MarkovGibbsMeasure) -> Value {
    let p = m.perron();
    json!({
        "rho": num(p.rho),
        "primitivity_index": p.primitivity_index,
        "tau": num(p.tau),
        "certified_residual": num(p.certified_residual),
        "certified_residual_left": num(p.certified_residual_left),
        "a_posteriori_delta": num(p.a_posteriori_delta),
        "residual_right": num(p.residual_right),
        "residual_left": num(p.residual_left),
        "iterations": p.iterations,
        "certified": p.certified,
    })
}

fn measure_summary(ctx: &Context, m: &MarkovGibbsMeasure, approx: Option<f64>) -> Result<Value, CliError> {
    let gibbs = m.gibbs_inequality_check(ctx.problem.gibbs_n_max, ctx.cap)?;
    Ok(json!({
        "range": m.range(),
        "pressure": num(ctx.log(m.pressure())),
        "rho": num(m.rho()),
        "gibbs_constant": num(m.gibbs_constant()),
        "approximation_error": approx.map(|v| num(ctx.log(v))),
        "perron": perron_json(m),
        "gibbs_check": {
            "n_max": ctx.problem.gibbs_n_max,
            "constant": num(gibbs.constant),
            "min_ratio": num(gibbs.min_ratio),
            "max_ratio": num(gibbs.max_ratio),
            "violations": gibbs.violations,
        },
    }))
}

fn measure(ctx: &Context, out: &mut Artifacts) -> Result<Option<String>, CliError> {
    let (pot, approx) = ctx.local_potential()?;
    let m = MarkovGibbsMeasure::with_default_tol(&pot)?;
    let words = ctx.words(pot.alphabet())?;
    let oracle = if ctx.verify { Some(OracleMeasure::new(&pot)?) } else { None };
    let mut table = Table::new(&["word", &ctx.log_column("prob")]);
    let mut mismatch = None;
    for w in &words {
        let lp = m.cylinder_log_prob(w)?;
        if let Some(o) = &oracle {
            let exact = o.cylinder(w.letters()).ln();
            if mismatch.is_none() && !agrees(lp, exact) {
                mismatch = Some(format!("mu[{}]: {lp} vs oracle {exact}", ctx.render(w)));
            }
        }
        table.push(vec![ctx.render(w), fmt_f64(ctx.log(lp))]);
    }
    out.table("measure.csv", &table)?;
    let mut summary = measure_summary(ctx, &m, approx)?;
    summary["log_base"] = json!(ctx.base());
    summary["verified"] = json!(ctx.verify && mismatch.is_none());
    out.json("measure.json", &summary)?;
    Ok(mismatch)
}

fn agrees(a: f64, b: f64) -> bool {
    (a - b).abs() <= VERIFY_TOL * b.abs().max(1.0)
}

fn pushforward_summary(ctx: &Context, pf: &PushforwardMeasure) -> Result<Value, CliError> {
    let gibbs = gibbs_check_pushforward(pf, ctx.problem.gibbs_n_max, ctx.cap)?;
    let spread = gibbs.log_spread();
    Ok(json!({
        "range": pf.range(),
        "theta": num(pf.theta()),
        "constants": constants_json(pf.constants()),
        "products_positive": pf.family().products_positive(),
        "product_tau": num(pf.family().product_tau()),
        "gibbs_check": {
            "n_max": ctx.problem.gibbs_n_max,
            "log_constant": num(ctx.log(gibbs.constant.ln())),
            "max_log_spread": num(ctx.log(spread.iter().copied().fold(0.0, f64::max))),
            "violations": gibbs.violations,
            "holds": gibbs.holds(),
        },
    }))
}

fn pushforward(ctx: &Context, out: &mut Artifacts) -> Result<Option<String>, CliError> {
    let map = ctx.map()?;
    let (pot, approx) = ctx.local_potential()?;
    let pf = PushforwardMeasure::new(&pot, map)?;
    let words = ctx.words(map.target())?;
    let oracle = if ctx.verify { Some(OracleMeasure::new(&pot)?) } else { None };
    let config = OracleConfig::default();
    let mut table = Table::new(&["word", &ctx.log_column("prob")]);
    let mut mismatch = None;
    for w in &words {
        let lp = pf.cylinder_log_prob(w)?;
        if let Some(o) = &oracle {
            let exact = oracle_pushforward(o, map, w.letters(), &config)?.ln();
            if mismatch.is_none() && !agrees(lp, exact) {
                mismatch = Some(format!("nu[{}]: {lp} vs oracle {exact}", ctx.render(w)));
            }
        }
        table.push(vec![ctx.render(w), fmt_f64(ctx.log(lp))]);
    }
    out.table("pushforward.csv", &table)?;
    let mut summary = pushforward_summary(ctx, &pf)?;
    summary["approximation_error"] = json!(approx.map(|v| num(ctx.log(v))));
    summary["log_base"] = json!(ctx.base());
    summary["verified"] = json!(ctx.verify && mismatch.is_none());
    out.json("pushforward.json", &summary)?;
    Ok(mismatch)
}

/// Exact induced potential of a lumpable weight-matrix chain, indexed by
/// the first two target letters.
fn lumped_potential(ctx: &Context) -> Result<Option<Vec<Vec<f64>>>, CliError> {
    let (Some(q), Some(map)) = (&ctx.problem.weights, &ctx.problem.map) else {
        return Ok(None);
    };
    let stochastic = q.iter().all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    if !stochastic {
        return Ok(None);
    }
    let Some(lumped) = oracle_lumped_chain(q, map, 1e-12)? else {
        return Ok(None);
    };
    let pi = oracle_stationary(&lumped)?;
    let kb = lumped.len();
    Ok(Some(
        (0..kb)
            .map(|b0| (0..kb).map(|b1| (pi[b0] * lumped[b0][b1] / pi[b1]).ln()).collect())
            .collect(),
    ))
}

fn induced_rows(
    ctx: &Context,
    ev: &InducedPotentialEvaluator,
) -> Result<Vec<(Word, InducedValue)>, CliError> {
    let words = ctx.words(ev.measure().map().target())?;
    words
        .into_iter()
        .map(|w| {
            let v = ev.evaluate(&w)?;
            Ok((w, v))
        })
        .collect()
}

fn induced_table(ctx: &Context, rows: &[(Word, InducedValue)]) -> Table {
    let mut table = Table::new(&[
        "word",
        "value",
        "error_bar",
        "lower",
        "upper",
        "log_ratio",
        "a_priori_bar",
        "a_posteriori_bar",
        "approximation_bar",
        "r",
        "n",
    ]);
    for (w, v) in rows {
        table.push(vec![
            ctx.render(w),
            fmt_f64(ctx.log(v.value)),
            fmt_f64(ctx.log(v.error_bar)),
            fmt_f64(ctx.log(v.lower)),
            fmt_f64(ctx.log(v.upper)),
            fmt_f64(ctx.log(v.log_ratio)),
            fmt_f64(ctx.log(v.a_priori_bar)),
            fmt_f64(ctx.log(v.a_posteriori_bar)),
            fmt_f64(ctx.log(v.approximation_bar)),
            v.r.to_string(),
            v.n.to_string(),
        ]);
    }
    table
}

fn variation_table(ctx: &Context, report: &VariationReport) -> Table {
    let mut table = Table::new(&["n", "empirical_var", "certified_bound", "error_bar"]);
    for row in &report.rows {
        table.push(vec![
            row.n.to_string(),
            fmt_f64(ctx.log(row.empirical_var)),
            fmt_f64(ctx.log(row.certified_bound)),
            fmt_f64(ctx.log(row.error_bar)),
        ]);
    }
    table
}

fn evaluator_json(ctx: &Context, ev: &InducedPotentialEvaluator) -> Value {
    json!({
        "mode": to_json(&ev.mode()),
        "r": ev.range(),
        "n": ev.depth(),
        "delta": num(ctx.delta),
        "tolerance": ev.tolerance().map(|t| num(ctx.log(t))),
        "approximation_bar": num(ctx.log(ev.approximation_bar())),
        "theta": num(ev.measure().theta()),
        "constants": constants_json(ev.measure().constants()),
        "psi_constants": ev.psi_constants().map(constants_json),
        "budget": ev.budget().map(to_json),
    })
}

fn decay_json(ctx: &Context, ev: &InducedPotentialEvaluator, report: &VariationReport) -> Value {
    let class = match &ctx.problem.potential {
        Potential::Local(p) => DecayClass::LocallyConstant { range: p.range() },
        Potential::General(psi) => psi.decay_class(),
    };
    let epsilon = match class {
        DecayClass::Polynomial { q, .. } => (q - 3.0) / 2.0,
        _ => 0.0,
    };
    let samples: Vec<(usize, f64)> = report
        .rows
        .iter()
        .map(|r| (r.n, r.certified_bound))
        .collect();
    let points: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.n > 0 && r.empirical_var > 0.0)
        .map(|r| (r.n as f64, r.empirical_var.ln()))
        .collect();
    let cert = match ev.decay_certificate(ctx.delta, epsilon) {
        Ok(c) => {
            let c = c.fit_constant(&samples);
            json!({
                "form": to_json(&c.form),
                "constant": c.constant.map(|k| num(ctx.log(k))),
                "envelope": c.to_string(),
                "envelope_rows": report.rows.iter().map(|r| json!({
                    "n": r.n,
                    "envelope": c.envelope(r.n).map(|v| num(ctx.log(v))),
                    "certified_bound": num(ctx.log(r.certified_bound)),
                })).collect::<Vec<_>>(),
            })
        }
        Err(e) => json!({ "unavailable": e.to_string() }),
    };
    json!({
        "decay_class": to_json(&class),
        "certificate": cert,
        "empirical_log_slope": log_linear_slope(&points).map(num),
        "log_base": ctx.base(),
    })
}

fn induced(ctx: &Context, out: &mut Artifacts) -> Result<Option<String>, CliError> {
    let ev = ctx.evaluator()?;
    let rows = induced_rows(ctx, &ev)?;
    let report = variation_report(&ev, ctx.problem.n_max, ctx.problem.lookahead, ctx.cap)?;
    let mut mismatch = None;
    if ctx.verify {
        let exact = lumped_potential(ctx)?;
        for (w, v) in &rows {
            let l = w.letters();
            let (ok, what) = match (&exact, l.len() >= 2) {
                (Some(phi), true) => {
                    let e = phi[l[0] as usize][l[1] as usize];
                    ((v.value - e).abs() <= v.error_bar + VERIFY_TOL, format!("lumped value {e}"))
                }
                _ => (
                    v.lower <= v.value + VERIFY_TOL && v.value <= v.upper + VERIFY_TOL,
                    format!("interval [{}, {}]", v.lower, v.upper),
                ),
            };
            if !ok {
                mismatch = Some(format!(
                    "phi[{}] = {} +- {} vs {what}",
                    ctx.render(w),
                    v.value,
                    v.error_bar
                ));
                break;
            }
        }
    }
    out.table("induced.csv", &induced_table(ctx, &rows))?;
    out.table("variation.csv", &variation_table(ctx, &report))?;
    out.json(
        "induced.json",
        &json!({
            "evaluator": evaluator_json(ctx, &ev),
            "variation": {
                "word_length": report.word_length,
                "n_max": ctx.problem.n_max,
                "lookahead": ctx.problem.lookahead,
            },
            "words": rows.len(),
            "log_base": ctx.base(),
            "verified": ctx.verify && mismatch.is_none(),
        }),
    )?;
    out.json("decay.json", &decay_json(ctx, &ev, &report))?;
    Ok(mismatch)
}

/// Rows of verify.csv; the first failure is reported.
struct Checks {
    table: Table,
    failure: Option<String>,
}

impl Checks {
    fn new() -> Self {
        Self {
            table: Table::new(&["check", "subject", "computed", "oracle", "abs_diff", "tolerance", "status"]),
            failure: None,
        }
    }

    fn record(&mut self, check: &str, subject: &str, computed: f64, oracle: f64, tol: f64) {
        let diff = (computed - oracle).abs();
        let ok = diff <= tol;
        if !ok && self.failure.is_none() {
            self.failure = Some(format!("{check} {subject}: {computed} vs {oracle}"));
        }
        self.table.push(vec![
            check.to_string(),
            subject.to_string(),
            fmt_f64(computed),
            fmt_f64(oracle),
            fmt_f64(diff),
            fmt_f64(tol),
            if ok { "ok" } else { "mismatch" }.to_string(),
        ]);
    }
}

fn verify(ctx: &Context, out: &mut Artifacts) -> Result<Option<String>, CliError> {
    let (pot, _) = ctx.local_potential()?;
    let m = MarkovGibbsMeasure::with_default_tol(&pot)?;
    let oracle = OracleMeasure::new(&pot)?;
    let config = OracleConfig::default();
    let mut checks = Checks::new();
    let tol = |x: f64| VERIFY_TOL * x.abs().max(1.0);

    for w in ctx.words(pot.alphabet())? {
        let lp = m.cylinder_log_prob(&w)?;
        let exact = oracle.cylinder(w.letters()).ln();
        checks.record("measure", &ctx.render(&w), lp, exact, tol(exact));
    }

    // periodic-point measures, short words only
    let k = pot.alphabet().size() as u64;
    let r = pot.range();
    for len in 1..=2usize {
        let p = len + r + 1;
        if p > config.max_period || k.checked_pow(p as u32).is_none_or(|c| c > ctx.cap) {
            continue;
        }
        for w in enumerate_words(pot.alphabet(), len, ctx.cap)? {
            let lp = m.periodic_log_measure(p, w.letters())?;
            let exact = oracle_cylinder(&pot, w.letters(), p, &config)?;
            checks.record("periodic", &format!("{}@{p}", ctx.render(&w)), lp, exact, tol(exact));
        }
    }

    for p in 1..=PRESSURE_PERIOD {
        if k.checked_pow(p as u32).is_none_or(|c| c > ctx.cap) {
            break;
        }
        let trace = pressure_trace(m.transfer(), p)?;
        let enumerated = pressure_periodic(&pot, p, ctx.cap)?;
        checks.record("pressure_trace", &p.to_string(), trace, enumerated, tol(enumerated));
    }
    let eigen = oracle.eigen().rho.ln();
    checks.record("log_rho", "-", m.rho().ln(), eigen, tol(eigen));

    if let Some(map) = &ctx.problem.map {
        let pf = PushforwardMeasure::new(&pot, map)?;
        for w in ctx.words(map.target())? {
            if w.len() > config.max_word_length {
                continue;
            }
            let lp = pf.cylinder_log_prob(&w)?;
            let exact = oracle_pushforward(&oracle, map, w.letters(), &config)?.ln();
            checks.record("pushforward", &ctx.render(&w), lp, exact, tol(exact));
        }
        if let Some(phi) = lumped_potential(ctx)? {
            let ev = InducedPotentialEvaluator::exact_r(pf, schedule_n(r, ctx.delta))?;
            for w in enumerate_words(map.target(), 2.max(r + 1), ctx.cap)? {
                let v = ev.evaluate(&w)?;
                let l = w.letters();
                let exact = phi[l[0] as usize][l[1] as usize];
                checks.record("lumped_induced", &ctx.render(&w), v.value, exact, v.error_bar + VERIFY_TOL);
            }
        }
    }

    out.table("verify.csv", &checks.table)?;
    Ok(checks.failure)
}

fn report(ctx: &Context, out: &mut Artifacts) -> Result<Option<String>, CliError> {
    let (pot, approx) = ctx.local_potential()?;
    let m = MarkovGibbsMeasure::with_default_tol(&pot)?;
    let mut doc = json!({
        "log_base": ctx.base(),
        "measure": measure_summary(ctx, &m, approx)?,
    });
    if let Potential::General(psi) = &ctx.problem.potential {
        let profile = psi.variation_profile(64)?;
        let constants = Constants::new(psi.alphabet().size(), psi.sup_norm_bound(0, u64::MAX)?, &profile);
        doc["potential"] = json!({
            "decay_class": to_json(&psi.decay_class()),
            "constants": constants_json(&constants),
            "r_star": r_star(&profile, &constants, ctx.delta).ok(),
            "pressure_gap_bound": num(ctx.log(pressure_gap_bound(&profile, pot.range()))),
        });
    }
    if ctx.problem.map.is_some() {
        let map = ctx.map()?;
        let pf = PushforwardMeasure::new(&pot, map)?;
        doc["pushforward"] = pushforward_summary(ctx, &pf)?;
        let ev = ctx.evaluator()?;
        let report = variation_report(&ev, ctx.problem.n_max, ctx.problem.lookahead, ctx.cap)?;
        doc["induced"] = evaluator_json(ctx, &ev);
        doc["decay"] = decay_json(ctx, &ev, &report);
        out.table("variation.csv", &variation_table(ctx, &report))?;
    }
    out.json("report.json", &doc)?;
    Ok(None)
}
