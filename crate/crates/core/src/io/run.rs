use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{load_spec, matrix_value, parse_json, spec_from_value, to_json_bytes};
use crate::escape::EscapeMethod;
use crate::model::{validate_spec, GameSpec};
use crate::riccati::{
    riccati_residual, solve_value_riccati, RiccatiProblem, RiccatiSolution, StepControl,
};
use crate::schedule::{check_admissibility, max_next_instance, optimal_schedule, ScheduleOptions};
use crate::sim::{
    deviation_sweep, game_value, open_loop_inputs, payoff_two_ways, reachable_radius, simpson,
    simulate, suggest_risky, EvaderStrategy, InputSignal, PursuerStrategy, SweepSetup,
};
use crate::{Error, Result, Tolerances};

#[derive(Clone, Debug, PartialEq)]
pub enum SpecSource {
    Inline(Value),
    File(PathBuf),
}

impl SpecSource {
    pub fn preset(name: &str) -> Self {
        SpecSource::Inline(json!({ "preset": name }))
    }

    pub fn load(&self) -> Result<GameSpec> {
        match self {
            SpecSource::Inline(v) => spec_from_value(v),
            SpecSource::File(p) => load_spec(p),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PursuerChoice {
    #[default]
    CertaintyEquivalent,
    OpenLoop,
}

impl PursuerChoice {
    fn strategy(self) -> PursuerStrategy {
        match self {
            PursuerChoice::CertaintyEquivalent => PursuerStrategy::certainty_equivalent(),
            PursuerChoice::OpenLoop => PursuerStrategy::open_loop(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EvaderChoice {
    #[default]
    Equilibrium,
    OpenLoop,
    /// Raw constant input `u_e`.
    Constant {
        u_e: Vec<f64>,
    },
    /// Equilibrium feedback plus a constant deviation `w`.
    Deviation {
        w: Vec<f64>,
    },
    /// Two-phase deviation on the first inadmissible interval.
    Risky {
        scale: f64,
    },
}

fn default_open_loop() -> PursuerChoice {
    PursuerChoice::OpenLoop
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    Validate,
    Riccati {
        #[serde(default)]
        csv: Option<PathBuf>,
    },
    Schedule {
        #[serde(default)]
        method: Option<EscapeMethod>,
        #[serde(default)]
        margin: Option<f64>,
    },
    CheckSchedule {
        instants: Vec<f64>,
        #[serde(default)]
        strict: bool,
        #[serde(default)]
        method: Option<EscapeMethod>,
    },
    Simulate {
        /// Defaults to the optimal schedule.
        #[serde(default)]
        instants: Option<Vec<f64>>,
        #[serde(default)]
        pursuer: PursuerChoice,
        #[serde(default)]
        evader: EvaderChoice,
        #[serde(default)]
        step: Option<f64>,
        #[serde(default)]
        csv: Option<PathBuf>,
    },
    Sweep {
        c_values: Vec<f64>,
        #[serde(default)]
        direction: Option<Vec<f64>>,
        #[serde(default = "default_open_loop")]
        pursuer: PursuerChoice,
        #[serde(default)]
        instants: Vec<f64>,
        #[serde(default)]
        step: Option<f64>,
    },
    Slack {
        t_prev: f64,
        #[serde(default)]
        upper: Option<f64>,
        #[serde(default)]
        method: Option<EscapeMethod>,
    },
    Reachability {
        /// Defaults to the latest admissible first instant.
        #[serde(default)]
        t1: Option<f64>,
        #[serde(default)]
        points: Option<usize>,
        #[serde(default)]
        csv: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Riccati { .. } => "riccati",
            Command::Schedule { .. } => "schedule",
            Command::CheckSchedule { .. } => "check-schedule",
            Command::Simulate { .. } => "simulate",
            Command::Sweep { .. } => "sweep",
            Command::Slack { .. } => "slack",
            Command::Reachability { .. } => "reachability",
        }
    }

    fn csv(&self) -> Option<&Path> {
        match self {
            Command::Riccati { csv }
            | Command::Simulate { csv, .. }
            | Command::Reachability { csv, .. } => csv.as_deref(),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub spec: SpecSource,
    pub command: Command,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn new(spec: SpecSource, command: Command) -> Self {
        Self {
            spec,
            command,
            tolerances: Tolerances::default(),
        }
    }

    /// Parses `{"spec": <object or path>, "command": {"name": ..., ...},
    /// "tolerances": {...}}`. Relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let root = parse_json(text)?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::schema("<root>", "expected a JSON object"))?;
        if let Some(key) = obj
            .keys()
            .find(|k| !["spec", "command", "tolerances"].contains(&k.as_str()))
        {
            return Err(Error::schema(key.clone(), "unknown field"));
        }
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let spec = match obj.get("spec") {
            Some(Value::String(p)) => SpecSource::File(resolve(Path::new(p))),
            Some(v @ Value::Object(_)) => SpecSource::Inline(v.clone()),
            Some(_) => return Err(Error::schema("spec", "expected an object or a path")),
            None => return Err(Error::schema("spec", "missing")),
        };
        let mut command: Command = serde_json::from_value(
            obj.get("command")
                .cloned()
                .ok_or_else(|| Error::schema("command", "missing"))?,
        )
        .map_err(|e| Error::schema("command", e.to_string()))?;
        match &mut command {
            Command::Riccati { csv }
            | Command::Simulate { csv, .. }
            | Command::Reachability { csv, .. } => {
                if let Some(p) = csv {
                    *p = resolve(p);
                }
            }
            _ => {}
        }
        let tolerances = match obj.get("tolerances") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::schema("tolerances", e.to_string()))?,
            None => Tolerances::default(),
        };
        let config = Self {
            spec,
            command,
            tolerances,
        };
        config.check_paths()?;
        Ok(config)
    }

    /// The spec file must exist and every output directory must exist.
    pub fn check_paths(&self) -> Result<()> {
        if let SpecSource::File(p) = &self.spec {
            if !p.is_file() {
                return Err(Error::schema(
                    "spec",
                    format!("{} is not a file", p.display()),
                ));
            }
        }
        if let Some(csv) = self.command.csv() {
            let dir = csv.parent().filter(|d| !d.as_os_str().is_empty());
            if let Some(dir) = dir {
                if !dir.is_dir() {
                    return Err(Error::schema(
                        "csv",
                        format!("directory {} does not exist", dir.display()),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Result of a successful dispatch. `success` is false only when a strict
/// check fails.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub report: Vec<u8>,
    pub success: bool,
    pub artifacts: Vec<PathBuf>,
}

struct Ctx {
    spec: GameSpec,
    tol: Tolerances,
    control: StepControl,
}

impl Ctx {
    fn value(&self) -> Result<RiccatiSolution> {
        solve_value_riccati(&self.spec, &self.control)
    }

    fn options(&self, method: Option<EscapeMethod>) -> ScheduleOptions {
        let opts = ScheduleOptions::new(&self.spec, &self.tol);
        match method {
            Some(m) => opts.with_method(m),
            None => opts,
        }
    }

    fn step(&self, step: Option<f64>) -> f64 {
        step.unwrap_or_else(|| self.tol.step(self.spec.horizon()))
    }

    fn vector(&self, field: &str, v: &[f64], len: usize) -> Result<DVector<f64>> {
        if v.len() != len {
            return Err(Error::InvalidArgument(format!(
                "{field} must have {len} entries, got {}",
                v.len()
            )));
        }
        Ok(DVector::from_column_slice(v))
    }
}

fn write_artifact(path: &Path, write: impl FnOnce(std::fs::File) -> Result<()>) -> Result<()> {
    write(std::fs::File::create(path)?)
}

fn vec_value(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&x| Value::from(x)).collect())
}

/// Loads the spec, dispatches the command and renders the JSON report.
pub fn run(config: &RunConfig) -> Result<Outcome> {
    config.check_paths()?;
    let spec = config.spec.load()?;
    let validation = validate_spec(&spec, &config.tolerances)?;
    let tol = config.tolerances.clone();
    let control = StepControl::new(spec.horizon(), &tol);
    let ctx = Ctx { spec, tol, control };

    let mut report = Map::new();
    report.insert("command".into(), Value::from(config.command.name()));
    let mut success = true;
    let mut artifacts = Vec::new();

    if !matches!(config.command, Command::Validate) && !validation.usable() {
        let v = validation
            .violations
            .iter()
            .find(|v| v.severity == crate::model::Severity::Error)
            .expect("unusable report has an error");
        return Err(Error::schema(v.check.clone(), v.message.clone()));
    }

    match &config.command {
        Command::Validate => {
            let dims = ctx.spec.dims()?;
            report.insert(
                "dims".into(),
                json!({ "nx": dims.nx, "np": dims.np, "ne": dims.ne }),
            );
            report.insert(
                "validation".into(),
                serde_json::to_value(&validation).expect("plain data"),
            );
        }
        Command::Riccati { csv } => {
            let p = ctx.value()?;
            let problem = RiccatiProblem::value(&ctx.spec)?;
            report.insert("kind".into(), Value::from("P"));
            report.insert("t0".into(), Value::from(ctx.spec.t0));
            report.insert("tf".into(), Value::from(ctx.spec.tf));
            report.insert("steps".into(), Value::from(p.grid().len() - 1));
            report.insert(
                "residual".into(),
                Value::from(riccati_residual(&p, &problem, 100)),
            );
            report.insert("P_t0".into(), matrix_value(&p.eval(ctx.spec.t0)?));
            report.insert("game_value".into(), Value::from(game_value(&ctx.spec, &p)?));
            if let Some(path) = csv {
                write_artifact(path, |f| p.write_csv(f))?;
                artifacts.push(path.clone());
            }
        }
        Command::Schedule { method, margin } => {
            let p = ctx.value()?;
            let mut opts = ctx.options(*method);
            if let Some(m) = margin {
                opts.margin = *m;
            }
            let schedule = optimal_schedule(&ctx.spec, &p, &opts)?;
            let Value::Object(fields) = serde_json::to_value(&schedule).expect("plain data") else {
                unreachable!()
            };
            report.extend(fields);
            report.insert(
                "method".into(),
                serde_json::to_value(opts.method).expect("enum"),
            );
        }
        Command::CheckSchedule {
            instants,
            strict,
            method,
        } => {
            let p = ctx.value()?;
            let opts = ctx.options(*method);
            let adm = check_admissibility(&ctx.spec, &p, instants, &opts)?;
            let failing: Vec<Value> = adm.failing().map(|c| json!([c.start, c.end])).collect();
            report.insert("instants".into(), json!(instants));
            report.insert("pass".into(), Value::from(adm.pass));
            report.insert("failing".into(), Value::Array(failing));
            report.insert(
                "certificates".into(),
                serde_json::to_value(&adm.certificates).expect("plain data"),
            );
            success = adm.pass || !strict;
        }
        Command::Simulate {
            instants,
            pursuer,
            evader,
            step,
            csv,
        } => {
            let p = ctx.value()?;
            let opts = ctx.options(None);
            let instants = match instants {
                Some(v) => v.clone(),
                None => optimal_schedule(&ctx.spec, &p, &opts)?.instants,
            };
            let dims = ctx.spec.dims()?;
            let step = ctx.step(*step);
            let evader = match evader {
                EvaderChoice::Equilibrium => EvaderStrategy::equilibrium(),
                EvaderChoice::OpenLoop => EvaderStrategy::OpenLoop {
                    deviation: InputSignal::Zero,
                },
                EvaderChoice::Constant { u_e } => {
                    EvaderStrategy::Input(InputSignal::Constant(ctx.vector("u_e", u_e, dims.ne)?))
                }
                EvaderChoice::Deviation { w } => {
                    EvaderStrategy::deviation(InputSignal::Constant(ctx.vector("w", w, dims.ne)?))
                }
                EvaderChoice::Risky { scale } => {
                    let adm = check_admissibility(&ctx.spec, &p, &instants, &opts)?;
                    let Some(bad) = adm.failing().next() else {
                        return Err(Error::IntervalAdmissible {
                            start: ctx.spec.t0,
                            end: ctx.spec.tf,
                        });
                    };
                    let plan = suggest_risky(&ctx.spec, &p, (bad.start, bad.end), &opts, step)?;
                    let r = plan.strategy.with_scale(*scale);
                    report.insert(
                        "risky".into(),
                        json!({
                            "interval": [r.start, r.end],
                            "escape": r.escape,
                            "switch": r.switch,
                            "scale": r.scale,
                            "gain": plan.gain,
                            "kick_w0": vec_value(&r.kick_w0),
                        }),
                    );
                    EvaderStrategy::Risky(r)
                }
            };
            let traj = simulate(&ctx.spec, &p, &instants, &pursuer.strategy(), &evader, step)?;
            let (direct, square) = payoff_two_ways(&traj, &ctx.spec, &p)?;
            report.insert("instants".into(), json!(instants));
            report.insert("step".into(), Value::from(step));
            report.insert("payoff".into(), Value::from(traj.payoff()));
            report.insert("direct".into(), Value::from(direct));
            report.insert("completed_square".into(), Value::from(square));
            report.insert("game_value".into(), Value::from(game_value(&ctx.spec, &p)?));
            report.insert("max_error_norm".into(), Value::from(traj.max_error_norm()));
            report.insert("x_tf".into(), vec_value(&traj.terminal().x));
            if let Some(path) = csv {
                write_artifact(path, |f| traj.write_csv(f))?;
                artifacts.push(path.clone());
            }
        }
        Command::Sweep {
            c_values,
            direction,
            pursuer,
            instants,
            step,
        } => {
            let p = ctx.value()?;
            let mut setup = SweepSetup::open_loop(&ctx.spec);
            setup.pursuer = pursuer.strategy();
            setup.instants = instants.clone();
            setup.step = ctx.step(*step);
            if let Some(d) = direction {
                setup.direction = ctx.vector("direction", d, ctx.spec.c.ncols())?;
            }
            let payoffs = deviation_sweep(&ctx.spec, &p, &setup, c_values)?;
            report.insert("c_values".into(), json!(c_values));
            report.insert("direction".into(), vec_value(&setup.direction));
            report.insert("instants".into(), json!(instants));
            report.insert("payoffs".into(), json!(payoffs));
        }
        Command::Slack {
            t_prev,
            upper,
            method,
        } => {
            let p = ctx.value()?;
            let opts = ctx.options(*method);
            let upper = upper.unwrap_or(ctx.spec.tf);
            let t_sup = max_next_instance(&ctx.spec, &p, *t_prev, upper, &opts)?;
            report.insert("t_prev".into(), Value::from(*t_prev));
            report.insert("upper".into(), Value::from(upper));
            report.insert("t_sup".into(), Value::from(t_sup));
        }
        Command::Reachability { t1, points, csv } => {
            let p = ctx.value()?;
            let spec = &ctx.spec;
            let t1 = match t1 {
                Some(t) => *t,
                None => max_next_instance(spec, &p, spec.t0, spec.tf, &ctx.options(None))?,
            };
            if !(t1 > spec.t0 && t1 <= spec.tf) {
                return Err(Error::InvalidArgument(format!(
                    "t1 = {t1} outside (t0, tf]"
                )));
            }
            let weight = isotropic_weight(&spec.r_e, ctx.tol.tol_sym)?;
            let n = 2 * ctx.tol.step_divisions.max(1);
            let grid: Vec<f64> = (0..=n)
                .map(|k| spec.t0 + (t1 - spec.t0) * k as f64 / n as f64)
                .collect();
            let ol = open_loop_inputs(spec, &p, &grid)?;
            let effort: Vec<f64> = ol
                .u_e
                .iter()
                .map(|u| crate::linalg::quad(u, &spec.r_e))
                .collect();
            let budget = simpson(&effort, (t1 - spec.t0) / n as f64);
            let radius = reachable_radius(budget, t1 - spec.t0, weight)?;
            let center = spec.c.transpose() * &spec.x0;
            let x_t1 = ol.state.last().expect("grid nonempty");
            report.insert("t1".into(), Value::from(t1));
            report.insert("budget".into(), Value::from(budget));
            report.insert("radius".into(), Value::from(radius));
            report.insert("center".into(), vec_value(&center));
            report.insert(
                "pursuer_position".into(),
                vec_value(&(spec.b.transpose() * x_t1)),
            );
            report.insert(
                "evader_nominal_position".into(),
                vec_value(&(spec.c.transpose() * x_t1)),
            );
            if let Some(path) = csv {
                if center.len() != 2 {
                    return Err(Error::InvalidArgument(
                        "circle export needs a planar evader".into(),
                    ));
                }
                let points = points.unwrap_or(361).max(2);
                write_artifact(path, |f| {
                    let mut w = csv::Writer::from_writer(f);
                    w.write_record(["theta", "x", "y"])?;
                    for k in 0..points {
                        let th = 2.0 * std::f64::consts::PI * k as f64 / (points - 1) as f64;
                        w.write_record([
                            super::fmt_f64(th),
                            super::fmt_f64(center[0] + radius * th.cos()),
                            super::fmt_f64(center[1] + radius * th.sin()),
                        ])?;
                    }
                    w.flush()?;
                    Ok(())
                })?;
                artifacts.push(path.clone());
            }
        }
    }

    Ok(Outcome {
        report: to_json_bytes(&Value::Object(report))?,
        success,
        artifacts,
    })
}

/// `r` when `R_e = r·I`.
fn isotropic_weight(r_e: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let r = r_e[(0, 0)];
    let iso = DMatrix::identity(r_e.nrows(), r_e.ncols()) * r;
    if (r_e - &iso).norm() > tol * (1.0 + r_e.norm()) {
        return Err(Error::InvalidArgument(
            "reachability needs an isotropic evader weight R_e = r I".into(),
        ));
    }
    Ok(r)
}
