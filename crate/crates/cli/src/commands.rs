//! Subcommand implementations.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use nvepr::constants::{angular_to_mhz, mhz_to_angular, PhysicalConstants};
use nvepr::deer::{deer_spectrum, nv_epr_signal};
use nvepr::eseem::{bath_decoherence, eseem_spectrum, hyperfine_entry, BathModel, EseemNucleus};
use nvepr::fitting::{
    fit_cpmg_t2, fit_deer_rabi_with, fit_gaussian_peak, fit_odmr_pair, fit_rabi, select_spin_count_with,
    DeerRabiOptions, FitResult, KMode, SelectionOptions,
};
use nvepr::hamiltonian::{g_value, invert_field as invert, TransitionPair};
use nvepr::synth::{
    cpmg_reference, deer_rabi_reference, deer_spectrum_reference, linear_grid, odmr_reference, rabi_reference,
    synthesize, Averaging, DetectorModel, PhysicsTruth, SequenceKind, SequenceSpec, DEER_RABI_REPETITIONS,
    DEER_SPECTRUM_REPETITIONS, REFERENCE_B0,
};
use nvepr::trace::{csv_comment_fields, SignalView, Trace};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{emit, Provenance};
use crate::{EseemArgs, FitArgs, InvertArgs, ReportArgs, SelectArgs, SimulateArgs};

const DEFAULT_FREQ_ERRORS: [f64; 2] = [6.78, 3.39];

fn parse_kind(s: &str) -> Result<SequenceKind, CliError> {
    s.parse()
        .map_err(|_| CliError::Usage(format!("unknown kind `{s}` (pulsed-odmr, rabi, cpmg8, cpmg-deer, deer-rabi)")))
}

fn field_b0(cfg: &RunConfig) -> f64 {
    cfg.field.as_ref().and_then(|f| f.b0).unwrap_or(REFERENCE_B0)
}

fn nuclei_from_labels(labels: &[String], b0: f64, consts: &PhysicalConstants) -> Result<Vec<EseemNucleus>, CliError> {
    labels
        .iter()
        .map(|l| {
            let entry = hyperfine_entry(l).ok_or_else(|| CliError::Config(format!("unknown nucleus `{l}`")))?;
            Ok(entry.nucleus(b0, consts)?)
        })
        .collect()
}

fn default_repetitions(kind: SequenceKind) -> u64 {
    match kind {
        SequenceKind::DeerRabi => DEER_RABI_REPETITIONS,
        SequenceKind::CpmgDeer => DEER_SPECTRUM_REPETITIONS,
        SequenceKind::Cpmg8 => 1_000_000,
        SequenceKind::PulsedOdmr | SequenceKind::Rabi => 200_000,
    }
}

#[derive(Debug, Serialize)]
struct SimulationSettings {
    spec: SequenceSpec,
    truth: PhysicsTruth,
    detector: DetectorModel,
}

fn simulation_settings(
    cfg: &RunConfig,
    args: &SimulateArgs,
    consts: &PhysicalConstants,
) -> Result<SimulationSettings, CliError> {
    let seq = cfg.sequence.clone().unwrap_or_default();
    let kind_name = args
        .kind
        .clone()
        .or(seq.kind.clone())
        .ok_or_else(|| CliError::Usage("simulate needs --kind or [sequence] kind".into()))?;
    let kind = parse_kind(&kind_name)?;
    let (mut spec, mut truth) = match kind {
        SequenceKind::PulsedOdmr => odmr_reference(),
        SequenceKind::Rabi => rabi_reference(),
        SequenceKind::Cpmg8 => cpmg_reference(consts),
        SequenceKind::CpmgDeer => deer_spectrum_reference(),
        SequenceKind::DeerRabi => deer_rabi_reference(),
    };
    if let Some(g) = &seq.grid {
        if !(g.step > 0.0 && g.stop >= g.start) {
            return Err(CliError::Config("[sequence.grid] needs step > 0 and stop >= start".into()));
        }
        spec.grid = linear_grid(g.start, g.stop, g.step);
    }
    spec.tau = seq.tau.unwrap_or(spec.tau);
    spec.n_pulses = seq.n_pulses.unwrap_or(spec.n_pulses);
    spec.pi_pulse_ns = seq.pi_pulse_ns.unwrap_or(spec.pi_pulse_ns);

    let t = cfg.truth.clone().unwrap_or_default();
    match &mut truth {
        PhysicsTruth::PulsedOdmr { b0, theta, depth, linewidth } => {
            let field = cfg.field.clone().unwrap_or_default();
            let o = t.pulsed_odmr.unwrap_or_default();
            *b0 = o.b0.or(field.b0).unwrap_or(*b0);
            *theta = o.theta_deg.or(field.theta_deg).map_or(*theta, f64::to_radians);
            *depth = o.depth.unwrap_or(*depth);
            *linewidth = o.linewidth.or(*linewidth);
        }
        PhysicsTruth::Rabi { f, t0 } => {
            let r = t.rabi.unwrap_or_default();
            *f = r.f.unwrap_or(*f);
            *t0 = r.t0.unwrap_or(*t0);
        }
        PhysicsTruth::Cpmg { nuclei, bath, t2 } => {
            let c = t.cpmg8.unwrap_or_default();
            let b0 = field_b0(cfg);
            if let Some(labels) = &c.nuclei {
                *nuclei = nuclei_from_labels(labels, b0, consts)?;
            } else if cfg.field.as_ref().and_then(|f| f.b0).is_some() {
                *nuclei = nuclei_from_labels(&["c13-near".to_string()], b0, consts)?;
            }
            *bath = BathModel::c13(c.b_rms.unwrap_or(bath.b_rms), b0, spec.n_pulses, consts);
            *t2 = c.t2.unwrap_or(*t2);
        }
        PhysicsTruth::CpmgDeer { spectrum } => {
            let s = t.cpmg_deer.unwrap_or_default();
            spectrum.center = s.center.unwrap_or(spectrum.center);
            if let Some(fwhm) = s.fwhm {
                spectrum.width = fwhm / (8.0 * 2f64.ln()).sqrt();
            }
            spectrum.amplitude = s.amplitude.unwrap_or(spectrum.amplitude);
            spectrum.baseline = s.baseline.unwrap_or(spectrum.baseline);
        }
        PhysicsTruth::DeerRabi { model } => {
            let d = t.deer_rabi.unwrap_or_default();
            if let Some(c) = d.couplings_mhz {
                model.omegas = c.into_iter().map(mhz_to_angular).collect();
            }
            model.t0 = d.t0.unwrap_or(model.t0);
            model.validate()?;
        }
    }

    let dc = cfg.detector.clone().unwrap_or_default();
    let mut det = DetectorModel::new(
        args.n_avg.or(dc.n_avg).unwrap_or_else(|| default_repetitions(kind)),
        args.seed.or(cfg.seed).unwrap_or(0),
    );
    det.counts_bright = dc.counts_bright.unwrap_or(det.counts_bright);
    det.counts_dark = dc.counts_dark.unwrap_or(det.counts_dark);
    det.noiseless = args.noiseless || dc.noiseless.unwrap_or(false);
    det.averaging = match args.averaging.as_deref().or(dc.averaging.as_deref()) {
        None | Some("per-point") => Averaging::PerPoint,
        Some("total") => Averaging::Total,
        Some(other) => return Err(CliError::Usage(format!("unknown averaging `{other}` (per-point, total)"))),
    };
    Ok(SimulationSettings { spec, truth, detector: det })
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<(), CliError> {
    let consts = PhysicalConstants::default();
    let settings = simulation_settings(cfg, args, &consts)?;
    let trace = synthesize(&settings.spec, &settings.truth, &settings.detector, &consts)?;
    let prov = Provenance::new(&settings, Some(settings.detector.seed), None);
    let mut comments = vec![format!("kind={}", settings.spec.kind.as_str())];
    comments.extend(prov.comment_lines());
    emit(args.out.as_deref(), &trace.to_csv(&comments))
}

struct LoadedTrace {
    trace: Trace,
    kind: SequenceKind,
    bytes: Vec<u8>,
}

fn load_trace(path: &Path, kind: Option<&str>) -> Result<LoadedTrace, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Data(format!("{} is not UTF-8", path.display())))?;
    let trace = Trace::from_csv(text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let fields = csv_comment_fields(text);
    let name = kind
        .map(str::to_string)
        .or_else(|| fields.get("kind").cloned())
        .ok_or_else(|| CliError::Usage("trace header has no kind; pass --kind".into()))?;
    Ok(LoadedTrace { trace, kind: parse_kind(&name)?, bytes })
}

fn fit_summary(f: &FitResult) -> Value {
    json!({
        "converged": f.converged,
        "n_iter": f.n_iter,
        "ss_res": f.ss_res,
        "adj_r2": f.adj_r2,
        "at_bound": f.at_bound,
    })
}

/// Fit outcome: JSON result, model curve on the grid, the data it was fitted
/// to, and the convergence flag.
struct Fitted {
    result: Value,
    model: Vec<f64>,
    data: Vec<f64>,
    converged: bool,
}

fn deer_options(cfg: &RunConfig) -> DeerRabiOptions {
    DeerRabiOptions {
        poisson_weights: cfg.fit.as_ref().and_then(|f| f.poisson_weights).unwrap_or(false),
        ..DeerRabiOptions::default()
    }
}

fn fit_trace(cfg: &RunConfig, lt: &LoadedTrace, n_spins: Option<usize>) -> Result<Fitted, CliError> {
    let consts = PhysicalConstants::default();
    let trace = &lt.trace;
    let x = trace.x();
    let fcfg = cfg.fit.clone().unwrap_or_default();
    Ok(match lt.kind {
        SequenceKind::PulsedOdmr => {
            let odmr = fit_odmr_pair(trace, &consts)?;
            let [em, ep] = fcfg.freq_errors.unwrap_or(DEFAULT_FREQ_ERRORS);
            let field = invert(odmr.pair, (em, ep), &consts)?;
            let model = x
                .iter()
                .map(|&f| {
                    let side = if f < consts.zero_field_d { &odmr.lower } else { &odmr.upper };
                    deer_spectrum(f, &side.model)
                })
                .collect();
            Fitted {
                result: json!({
                    "f_minus_mhz": odmr.pair.f_minus,
                    "f_plus_mhz": odmr.pair.f_plus,
                    "center_errors_mhz": [odmr.errors.0, odmr.errors.1],
                    "b0_mt": field.b0,
                    "b0_err_mt": field.b0_err,
                    "theta_deg": field.theta.to_degrees(),
                    "theta_err_deg": field.theta_err.to_degrees(),
                    "fit": [fit_summary(&odmr.lower.fit), fit_summary(&odmr.upper.fit)],
                }),
                model,
                data: trace.signal(SignalView::Population)?,
                converged: odmr.lower.fit.converged && odmr.upper.fit.converged,
            }
        }
        SequenceKind::Rabi => {
            let r = fit_rabi(trace)?;
            let model = x
                .iter()
                .map(|&t| 0.5 * (1.0 + (-(t / r.t0).powi(2)).exp() * (2.0 * std::f64::consts::PI * r.f * t).cos()))
                .collect();
            Fitted {
                result: json!({
                    "f_mhz": r.f, "f_err_mhz": r.f_err, "t0_us": r.t0, "t0_err_us": r.t0_err,
                    "fit": fit_summary(&r.fit),
                }),
                model,
                data: trace.signal(SignalView::Population)?,
                converged: r.fit.converged,
            }
        }
        SequenceKind::Cpmg8 => {
            let b0 = field_b0(cfg);
            let c = cfg.truth.as_ref().and_then(|t| t.cpmg8.clone()).unwrap_or_default();
            let labels = c.nuclei.unwrap_or_else(|| vec!["c13-near".into()]);
            let nuclei = nuclei_from_labels(&labels, b0, &consts)?;
            let bath = BathModel::c13(c.b_rms.unwrap_or(4.0), b0, 8, &consts);
            let r = fit_cpmg_t2(trace, &nuclei, &bath, &consts)?;
            let model = nvepr::eseem::cpmg_echo_model(x, &nuclei, &bath, r.t2, &consts)?
                .into_iter()
                .map(nvepr::eseem::coherence_to_population)
                .collect();
            Fitted {
                result: json!({ "t2_us": r.t2, "t2_err_us": r.t2_err, "nuclei": labels, "fit": fit_summary(&r.fit) }),
                model,
                data: trace.signal(SignalView::Population)?,
                converged: r.fit.converged,
            }
        }
        SequenceKind::CpmgDeer => {
            let p = fit_gaussian_peak(trace)?;
            let b0 = field_b0(cfg);
            let g = g_value(p.model.center, b0, &consts)?;
            Fitted {
                result: json!({
                    "center_mhz": p.model.center,
                    "sigma_mhz": p.model.width,
                    "fwhm_mhz": p.fwhm(),
                    "amplitude": p.model.amplitude,
                    "baseline": p.model.baseline,
                    "errors": p.errors,
                    "residual_sd": p.residual_sd,
                    "durbin_watson": p.durbin_watson,
                    "lack_of_fit": p.lack_of_fit,
                    "g_value": g,
                    "b0_mt": b0,
                    "fit": fit_summary(&p.fit),
                }),
                model: x.iter().map(|&f| deer_spectrum(f, &p.model)).collect(),
                data: trace.signal(SignalView::Difference)?,
                converged: p.fit.converged,
            }
        }
        SequenceKind::DeerRabi => {
            let n = n_spins.or(fcfg.n_spins).unwrap_or(2);
            let r = fit_deer_rabi_with(trace, n, &deer_options(cfg))?;
            Fitted {
                result: json!({
                    "n_spins": n,
                    "couplings_mhz": r.model.couplings_mhz(),
                    "t0_us": r.model.t0,
                    "errors": r.errors.as_ref().map(|e| {
                        let mut v: Vec<f64> = e[..n].iter().map(|w| angular_to_mhz(*w)).collect();
                        v.push(e[n]);
                        v
                    }),
                    "bound_saturated": r.bound_saturated,
                    "fit": fit_summary(&r.fit),
                }),
                model: x.iter().map(|&t| nv_epr_signal(&r.model, t)).collect(),
                data: trace.signal(SignalView::Population)?,
                converged: r.fit.converged,
            }
        }
    })
}

#[derive(Serialize)]
struct FitSettings<'a> {
    command: &'a str,
    kind: &'a str,
    n_spins: Option<usize>,
    config: &'a RunConfig,
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn input_seed(bytes: &[u8]) -> Option<u64> {
    let text = std::str::from_utf8(bytes).ok()?;
    csv_comment_fields(text).get("seed")?.parse().ok()
}

pub fn fit(cfg: &RunConfig, args: &FitArgs) -> Result<(), CliError> {
    let lt = load_trace(&args.input, args.kind.as_deref())?;
    let fitted = fit_trace(cfg, &lt, args.n_spins)?;
    let settings = FitSettings { command: "fit", kind: lt.kind.as_str(), n_spins: args.n_spins, config: cfg };
    let prov = Provenance::new(&settings, input_seed(&lt.bytes), Some(&lt.bytes));
    let report = json!({
        "kind": lt.kind.as_str(),
        "converged": fitted.converged,
        "result": fitted.result,
        "provenance": prov,
    });
    emit(args.out.as_deref(), &json_text(&report))?;
    if !fitted.converged {
        return Err(CliError::NoConvergence("result written with converged = false".into()));
    }
    Ok(())
}

pub fn report(cfg: &RunConfig, args: &ReportArgs) -> Result<(), CliError> {
    let lt = load_trace(&args.input, args.kind.as_deref())?;
    let fitted = fit_trace(cfg, &lt, args.n_spins)?;
    let settings = FitSettings { command: "report", kind: lt.kind.as_str(), n_spins: args.n_spins, config: cfg };
    let prov = Provenance::new(&settings, input_seed(&lt.bytes), Some(&lt.bytes));
    let mut out = String::new();
    out.push_str(&format!("# nvepr report: kind={} x in {}\n", lt.kind.as_str(), lt.trace.x_kind().unit()));
    for line in prov.comment_lines() {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str(&format!("# converged={}\n", fitted.converged));
    out.push_str(&format!("# result={}\n", serde_json::to_string(&fitted.result).expect("json")));
    out.push_str("x,model,data,residual\n");
    for ((x, m), d) in lt.trace.x().iter().zip(&fitted.model).zip(&fitted.data) {
        out.push_str(&format!("{x:.16e},{m:.16e},{d:.16e},{:.16e}\n", d - m));
    }
    emit(args.out.as_deref(), &out)?;
    if !fitted.converged {
        return Err(CliError::NoConvergence("report written with converged = false".into()));
    }
    Ok(())
}

pub fn invert_field(cfg: &RunConfig, args: &InvertArgs) -> Result<(), CliError> {
    let consts = PhysicalConstants::default();
    let cfg_err = cfg.fit.as_ref().and_then(|f| f.freq_errors).unwrap_or(DEFAULT_FREQ_ERRORS);
    let errs = (args.err_minus.unwrap_or(cfg_err[0]), args.err_plus.unwrap_or(cfg_err[1]));
    let pair = TransitionPair::new(args.f_minus, args.f_plus).map_err(|e| CliError::Usage(e.to_string()))?;
    let est = invert(pair, errs, &consts)?;
    let text = if args.json {
        json_text(&json!({
            "b0_mt": est.b0,
            "b0_err_mt": est.b0_err,
            "theta_deg": est.theta.to_degrees(),
            "theta_err_deg": est.theta_err.to_degrees(),
        }))
    } else {
        format!(
            "B0 = {:.4} +/- {:.4} mT\ntheta = {:.3} +/- {:.3} deg\n",
            est.b0,
            est.b0_err,
            est.theta.to_degrees(),
            est.theta_err.to_degrees()
        )
    };
    emit(None, &text)
}

pub fn eseem(cfg: &RunConfig, args: &EseemArgs) -> Result<(), CliError> {
    let consts = PhysicalConstants::default();
    let ec = cfg.eseem.clone().unwrap_or_default();
    let b0 = args.b0.unwrap_or_else(|| field_b0(cfg));
    let labels = if !args.nuclei.is_empty() {
        args.nuclei.clone()
    } else {
        ec.nuclei.clone().unwrap_or_else(|| vec!["c13-near".into()])
    };
    let nuclei = nuclei_from_labels(&labels, b0, &consts)?;
    let n_pulses = args.n_pulses.or(ec.n_pulses).unwrap_or(8);
    let bath = BathModel::c13(args.b_rms.or(ec.b_rms).unwrap_or(4.0), b0, n_pulses, &consts);
    let tau_max = args.tau_max.or(ec.tau_max).unwrap_or(5.0);
    let points = args.points.or(ec.points).unwrap_or(501);
    if points < 2 || !(tau_max > 0.0) {
        return Err(CliError::Usage("need at least 2 points and tau-max > 0".into()));
    }
    if let Some(t2) = args.t2 {
        if !(t2 > 0.0) {
            return Err(CliError::Usage("--t2 must be positive".into()));
        }
    }
    let spectra = nuclei.iter().map(eseem_spectrum).collect::<Result<Vec<_>, _>>()?;
    if n_pulses == 0 || n_pulses % 2 == 1 {
        return Err(CliError::Usage(format!("n-pulses must be even and non-zero, got {n_pulses}")));
    }
    let gamma_e = consts.gamma_nv_angular_per_ut();
    let mut out =
        format!("# nvepr eseem: tau and t_total in us, B0 = {b0} mT, N = {n_pulses}, B_rms = {} uT\n", bath.b_rms);
    for (l, s) in labels.iter().zip(&spectra) {
        out.push_str(&format!("# {l}: k={:.6e}\n", s.k));
    }
    let cols: Vec<String> = labels.iter().map(|l| format!("v_{l}")).collect();
    out.push_str(&format!("tau,t_total,{},v_total,bath,coherence\n", cols.join(",")));
    for i in 0..points {
        let tau = tau_max * i as f64 / (points - 1) as f64;
        let t_total = 2.0 * n_pulses as f64 * tau;
        let vs: Vec<f64> = spectra.iter().map(|s| s.modulation(tau, n_pulses)).collect();
        let v: f64 = vs.iter().product();
        let c = bath_decoherence(tau, &bath, gamma_e)?;
        let decay = args.t2.map_or(1.0, |t2| (-t_total / t2).exp());
        let vs_txt: Vec<String> = vs.iter().map(|v| format!("{v:.12e}")).collect();
        out.push_str(&format!(
            "{tau:.12e},{t_total:.12e},{},{v:.12e},{c:.12e},{:.12e}\n",
            vs_txt.join(","),
            decay * c * v
        ));
    }
    emit(args.out.as_deref(), &out)
}

pub fn select_spins(cfg: &RunConfig, args: &SelectArgs) -> Result<(), CliError> {
    let lt = load_trace(&args.input, Some("deer-rabi"))?;
    let fcfg = cfg.fit.clone().unwrap_or_default();
    let max_n = args.max_n.or(fcfg.max_n).unwrap_or(3);
    let opts = SelectionOptions {
        k_mode: match args.k_fixed.or(fcfg.k_fixed) {
            Some(k) => KMode::Fixed(k),
            None => KMode::PerModel,
        },
        normalize_unit_range: args.normalize || fcfg.normalize.unwrap_or(false),
        fit: deer_options(cfg),
    };
    let sel = select_spin_count_with(&lt.trace, max_n, &opts)?;
    let text = if args.json {
        let rows: Vec<Value> = sel
            .fits
            .iter()
            .enumerate()
            .map(|(i, f)| {
                json!({
                    "n": i + 1,
                    "adj_r2": sel.adj_r2[i],
                    "r2": sel.r2[i],
                    "couplings_mhz": f.model.couplings_mhz(),
                    "t0_us": f.model.t0,
                    "bound_saturated": f.bound_saturated,
                })
            })
            .collect();
        json_text(&json!({ "best_n": sel.best_n, "no_signal": sel.no_signal, "models": rows }))
    } else {
        let mut s = String::from("n  adj_r2     r2         t0_us    couplings_mhz\n");
        for (i, f) in sel.fits.iter().enumerate() {
            let c: Vec<String> = f.model.couplings_mhz().iter().map(|v| format!("{v:.3}")).collect();
            s.push_str(&format!(
                "{}  {:<9.5}  {:<9.5}  {:<7.4}  {}{}\n",
                i + 1,
                sel.adj_r2[i],
                sel.r2[i],
                f.model.t0,
                c.join(" "),
                if f.bound_saturated { "  (at bound)" } else { "" }
            ));
        }
        s.push_str(&format!("best_n = {}\n", sel.best_n));
        if sel.no_signal {
            s.push_str("no signal: adjusted R^2 <= 0 for every model\n");
        }
        s
    };
    emit(args.out.as_deref(), &text)
}
