use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use zrp_core::linalg::Kernel;
use zrp_core::markov::{hamiltonian, steady_state, transfer_matrix, SectorOperator, SteadyState};
use zrp_core::mpa::{
    conjecture_grid, crosscheck_homogeneous, crosscheck_steady, crosscheck_tazrp, mpa_values, CrosscheckReport, MpaFormula,
};
use zrp_core::simulator::{
    discrete_step, estimate_replicas, gillespie_step, DiscreteKernel, EmpiricalDist, RateTable, SimState, RNG_NAME,
};
use zrp_core::suites::{run_suites, Suite, SuiteOptions};
use zrp_core::{Config, Field, Mode, Occupancy, Rational, Sector, ZrpError};

use crate::report::{header, write_json, write_text, CliError, EXIT_CHECK_FAILED, EXIT_OK};
use crate::{Cli, Command, ConjectureArgs, FormulaArg, ModeArg, ModelArgs, MpaArgs, SimulateArgs, SteadyArgs, VerifyArgs};

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> u8 {
    let mode = match cli.mode {
        ModeArg::Exact => Mode::Exact,
        ModeArg::Float => Mode::Float,
    };
    let (name, params, result) = match &cli.command {
        Command::Steady(a) => ("steady", model_params(&a.model), steady(cli, mode, a)),
        Command::Verify(a) => ("verify", verify_params(a), verify(cli, mode, a)),
        Command::Mpa(a) => ("mpa", mpa_params(a), mpa(cli, mode, a)),
        Command::Simulate(a) => ("simulate", simulate_params(a), simulate(cli, a)),
        Command::Conjecture(a) => ("conjecture", conjecture_params(a), conjecture(cli, mode, a)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("zrp {name}: {}", e.message);
            let report = json!({
                "header": header(name, mode, params, None),
                "error": {"kind": e.kind, "message": e.message},
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
            e.code
        }
    }
}

fn model_params(m: &ModelArgs) -> Value {
    json!({
        "n": m.n,
        "L": m.len,
        "m": m.m,
        "q": m.q,
        "mus": m.mus,
        "mu": m.mu,
        "lambda": m.lambda,
        "a": m.a,
        "b": m.b,
    })
}

fn verify_params(a: &VerifyArgs) -> Value {
    json!({"suite": a.suite, "weight": a.weight, "max_weight": a.max_weight, "cutoff": a.cutoff})
}

fn mpa_params(a: &MpaArgs) -> Value {
    let mut p = model_params(&a.model);
    p["formula"] = json!(format!("{:?}", a.formula).to_lowercase());
    p["crosscheck"] = json!(a.crosscheck);
    p
}

fn simulate_params(a: &SimulateArgs) -> Value {
    let mut p = model_params(&a.model);
    p["events"] = json!(a.events);
    p["burn_in"] = json!(a.burn_in.unwrap_or(a.events / 10));
    p["replicas"] = json!(a.replicas);
    p["discrete"] = json!(a.discrete);
    p["initial"] = json!(a.initial);
    p
}

fn conjecture_params(a: &ConjectureArgs) -> Value {
    json!({"max_len": a.max_len, "max_total": a.max_total, "mu": a.mu, "q": a.q})
}

fn rat(name: &str, s: &str) -> CliResult<Rational> {
    s.parse()
        .map_err(|e: ZrpError| CliError::usage(format!("--{name}: {e}")))
}

/// Parsed model arguments.
struct Model {
    len: usize,
    m: Occupancy,
    q: Option<Rational>,
    mus: Option<Vec<Rational>>,
    mu: Option<Rational>,
    lambda: Option<Rational>,
    a: Rational,
    b: Rational,
}

impl Model {
    fn parse(args: &ModelArgs) -> CliResult<Model> {
        if args.m.len() != args.n {
            return Err(CliError::usage(format!(
                "--m has {} entries but --n is {}",
                args.m.len(),
                args.n
            )));
        }
        let mus = match &args.mus {
            Some(v) => {
                let mus = v.iter().map(|s| rat("mus", s)).collect::<CliResult<Vec<_>>>()?;
                if mus.len() != args.len {
                    return Err(CliError::usage(format!("--mus has {} entries but --L is {}", mus.len(), args.len)));
                }
                Some(mus)
            }
            None => None,
        };
        Ok(Model {
            len: args.len,
            m: Occupancy::new(args.m.clone()),
            q: args.q.as_deref().map(|s| rat("q", s)).transpose()?,
            mus,
            mu: args.mu.as_deref().map(|s| rat("mu", s)).transpose()?,
            lambda: args.lambda.as_deref().map(|s| rat("lambda", s)).transpose()?,
            a: rat("a", &args.a)?,
            b: rat("b", &args.b)?,
        })
    }

    fn q(&self) -> CliResult<Rational> {
        self.q.clone().ok_or_else(|| CliError::usage("--q is required"))
    }

    /// Site parameters from `--mus`, or `--mu` on every site.
    fn site_mus(&self) -> CliResult<Vec<Rational>> {
        match (&self.mus, &self.mu) {
            (Some(v), _) => Ok(v.clone()),
            (None, Some(mu)) => Ok(vec![mu.clone(); self.len]),
            (None, None) => Err(CliError::usage("--mus or --mu is required")),
        }
    }

    /// A common site parameter, from `--mu` or an all-equal `--mus`.
    fn common_mu(&self) -> CliResult<Rational> {
        match (&self.mu, &self.mus) {
            (Some(mu), _) => Ok(mu.clone()),
            (None, Some(v)) if v.windows(2).all(|w| w[0] == w[1]) && !v.is_empty() => Ok(v[0].clone()),
            (None, Some(_)) => Err(CliError::usage(
                "the continuous-time generator needs a common --mu; pass --lambda for the inhomogeneous transfer matrix",
            )),
            (None, None) => Err(CliError::usage("--mu is required")),
        }
    }

    fn sector(&self, cap: usize) -> CliResult<Arc<Sector>> {
        Ok(Arc::new(Sector::enumerate_capped(self.m.n(), self.len, &self.m, cap)?))
    }
}

fn in_unit_interval(name: &str, x: &Rational) -> CliResult<()> {
    if x > &Rational::zero() && x < &Rational::one() {
        Ok(())
    } else {
        Err(CliError::regime(format!("{name} = {x} must lie in (0, 1)")))
    }
}

fn transfer_regime(lambda: &Rational, mus: &[Rational], q: &Rational) -> CliResult<()> {
    in_unit_interval("q", q)?;
    in_unit_interval("lambda", lambda)?;
    for (i, mu) in mus.iter().enumerate() {
        if !(mu > &Rational::zero() && mu < lambda) {
            return Err(CliError::regime(format!(
                "mu_{} = {mu} must satisfy 0 < mu < lambda = {lambda}",
                i + 1
            )));
        }
    }
    Ok(())
}

fn generator_regime(a: &Rational, b: &Rational, mu: &Rational, q: &Rational) -> CliResult<()> {
    in_unit_interval("q", q)?;
    in_unit_interval("mu", mu)?;
    if a.is_negative() || b.is_negative() || (a.is_zero() && b.is_zero()) {
        return Err(CliError::regime(format!("hop scales a = {a}, b = {b} must be >= 0 and not both 0")));
    }
    Ok(())
}

fn sector_json(sector: &Sector) -> Value {
    json!({"n": sector.n(), "L": sector.sites(), "m": sector.m().counts(), "dim": sector.dim()})
}

fn config_json(c: &Config) -> Value {
    serde_json::from_str(&c.to_json()).expect("config json")
}

fn lift<F: Field>(v: &[Rational]) -> Vec<F> {
    v.iter().map(F::from_rational).collect()
}

/// Transfer matrix at `lambda` or the generator `a H1 + b H2`.
enum Dynamics {
    Transfer { lambda: Rational, mus: Vec<Rational> },
    Generator { a: Rational, b: Rational, mu: Rational },
}

impl Dynamics {
    fn from_model(model: &Model, q: &Rational) -> CliResult<Dynamics> {
        match &model.lambda {
            Some(lambda) => {
                let mus = model.site_mus()?;
                transfer_regime(lambda, &mus, q)?;
                Ok(Dynamics::Transfer {
                    lambda: lambda.clone(),
                    mus,
                })
            }
            None => {
                let mu = model.common_mu()?;
                generator_regime(&model.a, &model.b, &mu, q)?;
                Ok(Dynamics::Generator {
                    a: model.a.clone(),
                    b: model.b.clone(),
                    mu,
                })
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Dynamics::Transfer { .. } => "transfer",
            Dynamics::Generator { .. } => "generator",
        }
    }

    fn operator<F: Field>(&self, sector: &Arc<Sector>, q: &Rational) -> zrp_core::Result<SectorOperator<F>> {
        let q = F::from_rational(q);
        match self {
            Dynamics::Transfer { lambda, mus } => transfer_matrix(sector, &F::from_rational(lambda), &lift::<F>(mus), &q),
            Dynamics::Generator { a, b, mu } => hamiltonian(
                sector,
                &F::from_rational(a),
                &F::from_rational(b),
                &F::from_rational(mu),
                &q,
            ),
        }
    }
}

fn steady_entries<F: Kernel>(ss: &SteadyState<F>) -> Vec<Value> {
    ss.sector
        .configs()
        .iter()
        .zip(&ss.probs)
        .map(|(c, p)| {
            let exact = match F::MODE {
                Mode::Exact => Some(p.to_string()),
                Mode::Float => None,
            };
            json!({"config": config_json(c), "exact": exact, "float": p.to_f64()})
        })
        .collect()
}

fn steady(cli: &Cli, mode: Mode, args: &SteadyArgs) -> CliResult<u8> {
    let model = Model::parse(&args.model)?;
    let q = model.q()?;
    let dynamics = Dynamics::from_model(&model, &q)?;
    let sector = model.sector(cli.cap)?;
    let entries = match mode {
        Mode::Exact => steady_entries(&steady_state(&dynamics.operator::<Rational>(&sector, &q)?)?),
        Mode::Float => steady_entries(&steady_state(&dynamics.operator::<f64>(&sector, &q)?)?),
    };
    eprintln!(
        "steady: L={} m={:?} dim={} via the {} operator, normalized to unit sum",
        sector.sites(),
        sector.m().counts(),
        sector.dim(),
        dynamics.name()
    );
    let report = json!({
        "header": header("steady", mode, model_params(&args.model), None),
        "sector": sector_json(&sector),
        "operator": dynamics.name(),
        "normalization": "unit sum",
        "probabilities": entries,
    });
    write_json(cli.output.as_deref(), &report)?;
    Ok(EXIT_OK)
}

fn verify(cli: &Cli, mode: Mode, args: &VerifyArgs) -> CliResult<u8> {
    if mode != Mode::Exact {
        return Err(CliError::usage("identity suites run in exact arithmetic only"));
    }
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(&args.suite).ok_or_else(|| CliError::usage(format!("unknown suite {}", args.suite)))?]
    };
    let weights = match &args.weight {
        Some(w) if w.is_empty() || w.iter().all(|&x| x == 0) => {
            return Err(CliError::usage("--weight must have a positive entry"))
        }
        Some(w) => Some(vec![Occupancy::new(w.clone())]),
        None => None,
    };
    let opts = SuiteOptions {
        weights,
        max_weight: args.max_weight,
        fock_cutoff: args.cutoff,
        ..SuiteOptions::default()
    };
    let checks = run_suites(&suites, &opts);
    let failed = checks.iter().filter(|c| !c.outcome.is_pass()).count();
    for s in &suites {
        let mine: Vec<_> = checks.iter().filter(|c| c.suite == s.name()).collect();
        let pass = mine.iter().filter(|c| c.outcome.is_pass()).count();
        eprintln!("{}: {pass}/{} pass", s.name(), mine.len());
        for c in mine.iter().filter(|c| !c.outcome.is_pass()) {
            eprintln!("  {}: {}", c.case, c.outcome);
        }
    }
    let report = json!({
        "header": header("verify", mode, verify_params(args), None),
        "checks": checks,
        "passed": checks.len() - failed,
        "failed": failed,
    });
    write_json(cli.output.as_deref(), &report)?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Formula with rational parameters, ready to be lifted to either mode.
enum Formula {
    Inhomogeneous { mus: Vec<Rational>, q: Rational },
    Homogeneous { mu: Rational, q: Rational },
    Tazrp,
}

impl Formula {
    fn lift<F: Field>(&self) -> (MpaFormula<F>, F) {
        match self {
            Formula::Inhomogeneous { mus, q } => (MpaFormula::Inhomogeneous(lift(mus)), F::from_rational(q)),
            Formula::Homogeneous { mu, q } => (MpaFormula::Homogeneous(F::from_rational(mu)), F::from_rational(q)),
            Formula::Tazrp => (MpaFormula::Tazrp, F::zero()),
        }
    }
}

fn mpa_report<F: Kernel>(sector: &Arc<Sector>, formula: &Formula, model: &Model, crosscheck: bool) -> CliResult<(Value, bool)> {
    if !crosscheck {
        let (f, q) = formula.lift::<F>();
        let values = mpa_values(sector, f, &q)?;
        let entries: Vec<Value> = sector
            .configs()
            .iter()
            .zip(&values)
            .map(|(c, v)| json!({"config": config_json(c), "value": v.to_string()}))
            .collect();
        let value = json!({
            "sector": {"L": sector.sites(), "m": sector.m().counts()},
            "normalization": "trace gauge",
            "entries": entries,
            "ratio_to_direct": Value::Null,
        });
        return Ok((value, true));
    }
    let report: CrosscheckReport<F> = match formula {
        Formula::Inhomogeneous { mus, q } => {
            // The stationary vector does not depend on lambda; any point of
            // the regime mu_i < lambda < 1 will do.
            let lambda = match &model.lambda {
                Some(l) => l.clone(),
                None => {
                    let top = mus.iter().fold(Rational::zero(), |m, x| if x > &m { x.clone() } else { m });
                    (top + Rational::one()) / Rational::from_integer(2)
                }
            };
            transfer_regime(&lambda, mus, q)?;
            crosscheck_steady(sector, &F::from_rational(&lambda), &lift::<F>(mus), &F::from_rational(q))?
        }
        Formula::Homogeneous { mu, q } => {
            generator_regime(&model.a, &model.b, mu, q)?;
            crosscheck_homogeneous(
                sector,
                &F::from_rational(&model.a),
                &F::from_rational(&model.b),
                &F::from_rational(mu),
                &F::from_rational(q),
            )?
        }
        Formula::Tazrp => crosscheck_tazrp::<F>(sector)?,
    };
    let ok = report.outcome.is_pass();
    eprintln!("mpa: ratio to unit-sum steady state {} ({})", report.ratio_to_direct, report.outcome);
    Ok((report.to_json(), ok))
}

fn mpa(cli: &Cli, mode: Mode, args: &MpaArgs) -> CliResult<u8> {
    let model = Model::parse(&args.model)?;
    if model.m.n() != 2 {
        return Err(CliError::usage("the matrix product formula is implemented for two species"));
    }
    let c = model.m.counts();
    if c[1] == 0 {
        return Err(CliError {
            code: crate::report::EXIT_USAGE,
            kind: "divergent_trace",
            message: format!("m = {c:?}: the trace converges only with at least one species-2 particle"),
        });
    }
    let formula = match args.formula {
        FormulaArg::Inhomogeneous => {
            let mus = model
                .mus
                .clone()
                .ok_or_else(|| CliError::usage("--mus is required for the inhomogeneous formula"))?;
            let q = model.q()?;
            in_unit_interval("q", &q)?;
            for mu in &mus {
                in_unit_interval("mu", mu)?;
            }
            Formula::Inhomogeneous { mus, q }
        }
        FormulaArg::Homogeneous => {
            let mu = model.common_mu()?;
            let q = model.q()?;
            in_unit_interval("q", &q)?;
            in_unit_interval("mu", &mu)?;
            Formula::Homogeneous { mu, q }
        }
        FormulaArg::Tazrp => {
            let nonzero = |x: &Option<Rational>| x.as_ref().is_some_and(|v| !v.is_zero());
            if nonzero(&model.q) || nonzero(&model.mu) {
                eprintln!("mpa: the tazrp formula is the q = mu = 0 point; --q and --mu are ignored");
            }
            Formula::Tazrp
        }
    };
    let sector = model.sector(cli.cap)?;
    let (body, ok) = match mode {
        Mode::Exact => mpa_report::<Rational>(&sector, &formula, &model, args.crosscheck)?,
        Mode::Float => mpa_report::<f64>(&sector, &formula, &model, args.crosscheck)?,
    };
    let mut report = json!({"header": header("mpa", mode, mpa_params(args), None)});
    if let (Value::Object(dst), Value::Object(src)) = (&mut report, body) {
        dst.extend(src);
    }
    write_json(cli.output.as_deref(), &report)?;
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn run_with_trajectory(
    table: &RateTable,
    initial: &Config,
    args: &SimulateArgs,
    burn: u64,
    path: &Path,
) -> CliResult<EmpiricalDist> {
    let sector = table.sector().clone();
    let mut writer = csv::Writer::from_path(path).map_err(CliError::io)?;
    writer.write_record(["replica", "step", "time", "config"]).map_err(CliError::io)?;
    let mut dist = EmpiricalDist::new(&sector);
    for k in 0..args.replicas {
        let mut st = SimState::with_stream(&sector, initial.clone(), args.seed, k)?;
        if k == 0 {
            writer
                .write_record(["0", "0", "0", &st.config.to_json()])
                .map_err(CliError::io)?;
        }
        for step in 0..args.events {
            let here = st.index();
            let wait = gillespie_step(&mut st, table)?;
            if step >= burn {
                dist.record(here, wait);
            }
            if k == 0 {
                writer
                    .write_record([
                        "0".to_string(),
                        st.steps.to_string(),
                        st.time.to_string(),
                        st.config.to_json(),
                    ])
                    .map_err(CliError::io)?;
            }
        }
    }
    writer.flush().map_err(CliError::io)?;
    Ok(dist)
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> CliResult<u8> {
    let model = Model::parse(&args.model)?;
    let q = model.q()?;
    let burn = args.burn_in.unwrap_or(args.events / 10);
    if burn >= args.events {
        return Err(CliError::usage("--burn-in must be smaller than --events"));
    }
    if args.replicas == 0 {
        return Err(CliError::usage("--replicas must be at least 1"));
    }
    let dynamics = if args.discrete {
        if model.lambda.is_none() {
            return Err(CliError::usage("--discrete needs --lambda"));
        }
        Dynamics::from_model(&model, &q)?
    } else {
        let mu = model.common_mu()?;
        generator_regime(&model.a, &model.b, &mu, &q)?;
        Dynamics::Generator {
            a: model.a.clone(),
            b: model.b.clone(),
            mu,
        }
    };
    let sector = model.sector(cli.cap)?;
    let initial = match &args.initial {
        Some(s) => Config::parse_json(s)?,
        None => sector.config(0).clone(),
    };
    if sector.index_of(&initial).is_none() {
        return Err(CliError::usage(format!("--initial {initial} is not in the sector")));
    }
    let dist = match &dynamics {
        Dynamics::Generator { a, b, mu } => {
            let table = RateTable::new(&sector, a, b, mu, &q)?;
            match &args.trajectory {
                Some(path) => run_with_trajectory(&table, &initial, args, burn, path)?,
                None => estimate_replicas(&table, &initial, args.seed, args.replicas, args.events, burn)?,
            }
        }
        Dynamics::Transfer { .. } => {
            let t = dynamics.operator::<Rational>(&sector, &q)?;
            let kernel = DiscreteKernel::new(&t)?;
            let mut dist = EmpiricalDist::new(&sector);
            for k in 0..args.replicas {
                let mut st = SimState::with_stream(&sector, initial.clone(), args.seed, k)?;
                for step in 0..args.events {
                    discrete_step(&mut st, &kernel);
                    if step >= burn {
                        dist.record(st.index(), 1.0);
                    }
                }
            }
            dist
        }
    };
    let exact: Option<Vec<f64>> = if sector.dim() <= args.exact_cap {
        let ss = steady_state(&dynamics.operator::<Rational>(&sector, &q)?)?;
        Some(ss.probs.iter().map(|p| p.to_f64()).collect())
    } else {
        eprintln!(
            "simulate: sector dimension {} exceeds --exact-cap {}, skipping the exact comparison",
            sector.dim(),
            args.exact_cap
        );
        None
    };
    let tv = exact.as_ref().map(|e| dist.tv_distance(e));
    let probs = dist.probs();
    let entries: Vec<Value> = sector
        .configs()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            json!({
                "config": config_json(c),
                "empirical": probs[i],
                "exact": exact.as_ref().map(|e| e[i]),
            })
        })
        .collect();
    match tv {
        Some(tv) => eprintln!("simulate: total variation to the exact steady state {tv:.5}"),
        None => eprintln!("simulate: done"),
    }
    let report = json!({
        "header": header("simulate", Mode::Float, simulate_params(args), Some(args.seed)),
        "rng": RNG_NAME,
        "dynamics": dynamics.name(),
        "sector": sector_json(&sector),
        "horizon": args.events,
        "burn_in": burn,
        "replicas": args.replicas,
        "seed": args.seed,
        "tv_distance": tv,
        "distribution": entries,
    });
    write_json(cli.output.as_deref(), &report)?;
    Ok(EXIT_OK)
}

fn conjecture(cli: &Cli, mode: Mode, args: &ConjectureArgs) -> CliResult<u8> {
    let mu = rat("mu", &args.mu)?;
    let q = rat("q", &args.q)?;
    in_unit_interval("mu", &mu)?;
    in_unit_interval("q", &q)?;
    if args.max_len < 2 {
        return Err(CliError::usage("--max-len must be at least 2"));
    }
    // (m1, m2, L, j, r, lhs, rhs, equal)
    let rows: Vec<(Vec<u32>, usize, usize, u32, String, String, bool)> = match mode {
        Mode::Exact => conjecture_grid(args.max_len, args.max_total, &mu, &q)?
            .into_iter()
            .map(|r| (r.m, r.len, r.j, r.r, r.lhs.to_string(), r.rhs.to_string(), r.equal))
            .collect(),
        Mode::Float => conjecture_grid(args.max_len, args.max_total, &mu.to_f64(), &q.to_f64())?
            .into_iter()
            .map(|r| (r.m, r.len, r.j, r.r, r.lhs.to_string(), r.rhs.to_string(), r.equal))
            .collect(),
    };
    let head = header("conjecture", mode, conjecture_params(args), None);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["m1", "m2", "L", "j", "r", "lhs", "rhs", "equal", "asserted"])
        .map_err(CliError::io)?;
    let mut asserted_failures = 0;
    let mut open = (0, 0);
    for (m, len, j, r, lhs, rhs, equal) in &rows {
        let total: u32 = m.iter().sum();
        let asserted = *r <= 1 || *r == total;
        if asserted && !equal {
            asserted_failures += 1;
        }
        if !asserted {
            open.1 += 1;
            if *equal {
                open.0 += 1;
            }
        }
        wtr.write_record([
            m[0].to_string(),
            m[1].to_string(),
            len.to_string(),
            j.to_string(),
            r.to_string(),
            lhs.clone(),
            rhs.clone(),
            equal.to_string(),
            asserted.to_string(),
        ])
        .map_err(CliError::io)?;
    }
    let body = String::from_utf8(wtr.into_inner().map_err(CliError::io)?).expect("utf8 csv");
    let text = format!("# {}\n{body}", serde_json::to_string(&head).expect("json"));
    write_text(cli.output.as_deref(), &text)?;
    eprintln!(
        "conjecture: {} rows; asserted rows failing: {asserted_failures}; open rows (2 <= r < |m|) equal: {}/{}",
        rows.len(),
        open.0,
        open.1
    );
    Ok(if asserted_failures == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}
