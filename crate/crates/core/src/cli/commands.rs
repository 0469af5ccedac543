//! The four subcommands. Each is a pure function from configuration to the
//! output text, so repeated runs with one seed are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use super::config::{split_list, Config, ConfigError};
use super::CliError;
use crate::decoder::{bdd_radius, decode_cvp, resolve_sigma, ChainKind, DecodeConfig, SigmaPolicy};
use crate::diagnostics::{
    build_mhk_matrix, exact_target, exact_tv_trace, mixing_time_bound, spectral_radius_check,
};
use crate::klein::KleinSampler;
use crate::lattice::{babai_round, random_integer_basis, Basis, GaussianSpec};
use crate::mimo::{run_ber_sweep, DetectorSpec, MimoConfig};
use crate::rng::{stream_rng, StreamRng};
use crate::samplers::{
    delta_bound, delta_mtm, run_chain, MarkovSampler, MhkSampler, MtmkSampler,
    DEFAULT_DELTA_COVERAGE,
};

/// Stream reserved for generated bases, away from chain streams.
const BASIS_STREAM: u64 = u64::MAX;
/// `δ` at or above this counts as exact (`t_mix = 1`).
const EXACT_DELTA: f64 = 1.0 - 1e-12;

const BASIS_KEYS: [&str; 3] = ["basis", "basis_file", "basis_random"];

fn keys(extra: &[&'static str]) -> Vec<&'static str> {
    let mut v = vec!["seed", "out"];
    v.extend(BASIS_KEYS);
    v.extend_from_slice(extra);
    v
}

fn invalid(field: &str, msg: impl Into<String>) -> CliError {
    ConfigError::Invalid {
        field: field.into(),
        msg: msg.into(),
    }
    .into()
}

/// Basis from `basis` (inline rows, `;`-separated, row-major),
/// `basis_file` (dimension line then rows) or `basis_random = n, lo, hi`.
pub fn load_basis(cfg: &Config, seed: u64, base_dir: &Path) -> Result<Basis, CliError> {
    let given: Vec<&str> = BASIS_KEYS
        .iter()
        .copied()
        .filter(|k| cfg.raw(k).is_some())
        .collect();
    if given.len() != 1 {
        return Err(invalid(
            "basis",
            "give exactly one of basis, basis_file, basis_random",
        ));
    }
    match given[0] {
        "basis" => {
            let rows: Vec<Vec<f64>> = cfg
                .required("basis")?
                .split(';')
                .map(|r| {
                    split_list(r)
                        .map(str::parse)
                        .collect::<Result<Vec<f64>, _>>()
                })
                .collect::<Result<_, _>>()
                .map_err(|_| invalid("basis", "rows must be numbers"))?;
            if rows.iter().any(|r| r.len() != rows.len()) {
                return Err(invalid("basis", "matrix must be square"));
            }
            Ok(Basis::from_rows(&rows)?)
        }
        "basis_file" => {
            let p = base_dir.join(cfg.required("basis_file")?);
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Ok(Basis::parse_text(&text)?)
        }
        _ => {
            let v = cfg.get_list::<i64>("basis_random")?.unwrap_or_default();
            let [n, lo, hi] = v[..] else {
                return Err(invalid("basis_random", "expected n, lo, hi"));
            };
            if !(1..=64).contains(&n) {
                return Err(invalid("basis_random", "n must be in [1, 64]"));
            }
            let mut rng = stream_rng(seed, BASIS_STREAM);
            random_integer_basis(n as usize, lo, hi, &mut rng)
                .map_err(|e| invalid("basis_random", e.to_string()))
        }
    }
}

fn load_center(cfg: &Config, n: usize, required: bool) -> Result<DVector<f64>, CliError> {
    match cfg.get_list::<f64>("center")? {
        Some(v) if v.len() == n => Ok(DVector::from_vec(v)),
        Some(v) => Err(invalid(
            "center",
            format!("expected {n} entries, got {}", v.len()),
        )),
        None if required => Err(ConfigError::Missing("center".into()).into()),
        None => Ok(DVector::zeros(n)),
    }
}

fn sigma_policy(cfg: &Config) -> Result<SigmaPolicy, CliError> {
    match cfg.raw("sigma").unwrap_or("default") {
        "default" => Ok(SigmaPolicy::Default2SqrtPi),
        "klein" => Ok(SigmaPolicy::KleinLog),
        v => match v.parse::<f64>() {
            Ok(s) if s > 0.0 && s.is_finite() => Ok(SigmaPolicy::Explicit(s)),
            _ => Err(invalid(
                "sigma",
                format!("expected default, klein or a positive number, got '{v}'"),
            )),
        },
    }
}

fn positive<T: PartialOrd + Default + std::fmt::Display>(field: &str, v: T) -> Result<T, CliError> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn open_unit(cfg: &Config, field: &str, default: f64) -> Result<f64, CliError> {
    let v = cfg.get(field, default)?;
    Config::in_range(field, v, 0.0, 1.0, true)?;
    Ok(v)
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn pickups_of<S: MarkovSampler>(
    s: &S,
    x0: Vec<i64>,
    gap: u64,
    count: u64,
    rng: &mut StreamRng,
) -> Vec<Vec<i64>> {
    let mut picked = Vec::with_capacity(count as usize);
    run_chain(s, x0, gap * count, rng, |st, _| {
        if st.move_index % gap == 0 {
            picked.push(st.x.clone());
        }
    });
    picked
}

/// Chain pickups spaced by the mixing-time bound.
pub fn cmd_sample(cfg: &Config, seed: u64, base_dir: &Path) -> Result<String, CliError> {
    cfg.check_keys(&keys(&["center", "sigma", "k", "eps", "pickups", "mass"]))?;
    let basis = load_basis(cfg, seed, base_dir)?;
    let center = load_center(cfg, basis.dim(), false)?;
    let sigma = resolve_sigma(&basis, sigma_policy(cfg)?)?;
    let k = positive("k", cfg.get::<usize>("k", 1)?)?;
    let eps = open_unit(cfg, "eps", 0.01)?;
    let mass = open_unit(cfg, "mass", DEFAULT_DELTA_COVERAGE)?;
    let pickups = positive("pickups", cfg.get::<u64>("pickups", 100)?)?;

    let spec = GaussianSpec::new(sigma, center.clone())?;
    let delta = delta_bound(&basis, &spec, mass)?;
    let delta_eff = delta_mtm(delta, k)?;
    let gap = if delta_eff >= EXACT_DELTA {
        1
    } else {
        (mixing_time_bound(delta_eff, eps)?.0.ceil() as u64).max(1)
    };

    let klein = KleinSampler::new(basis.clone(), spec)?;
    let x0 = babai_round(&basis, &center).x;
    let mut rng = stream_rng(seed, 0);
    let picked = if k == 1 {
        pickups_of(&MhkSampler::new(klein), x0, gap, pickups, &mut rng)
    } else {
        pickups_of(&MtmkSampler::new(klein, k)?, x0, gap, pickups, &mut rng)
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# subcommand=sample n={} sigma={sigma} k={k} eps={eps}",
        basis.dim()
    );
    let _ = writeln!(
        out,
        "# delta={delta} delta_effective={delta_eff} gap={gap} pickups={pickups}"
    );
    let _ = writeln!(out, "# columns: x_1 .. x_n distance");
    for x in &picked {
        let _ = writeln!(out, "{} {}", join(x), basis.dist_sq(x, &center).sqrt());
    }
    Ok(out)
}

/// Writes the decode record as `key=value` lines.
pub fn cmd_decode(cfg: &Config, seed: u64, base_dir: &Path) -> Result<String, CliError> {
    cfg.check_keys(&keys(&[
        "center", "sigma", "moves", "k", "use_lll", "eps", "shards", "chain",
    ]))?;
    let basis = load_basis(cfg, seed, base_dir)?;
    let c = load_center(cfg, basis.dim(), true)?;
    let chain = match cfg.raw("chain").unwrap_or("klein") {
        "klein" => ChainKind::Klein,
        "gibbs" => ChainKind::Gibbs,
        v => {
            return Err(invalid(
                "chain",
                format!("expected klein or gibbs, got '{v}'"),
            ))
        }
    };
    let dc = DecodeConfig {
        sigma_policy: sigma_policy(cfg)?,
        moves: positive("moves", cfg.get::<u64>("moves", 50)?)?,
        trials_k: positive("k", cfg.get::<usize>("k", 1)?)?,
        use_lll: cfg.get_bool("use_lll", true)?,
        eps: open_unit(cfg, "eps", 0.01)?,
        seed,
        stream: 0,
        shards: positive("shards", cfg.get::<usize>("shards", 1)?)?,
        chain,
    };
    let r = decode_cvp(&basis, &c, &dc)?;
    let work = if dc.use_lll {
        crate::lattice::lll_reduce(&basis, crate::lattice::DEFAULT_KAPPA)?.0
    } else {
        basis
    };
    let sigma = resolve_sigma(&work, dc.sigma_policy)?;
    let radius = match bdd_radius(sigma, dc.moves as f64, dc.eps, dc.trials_k) {
        Ok(r) => r.to_string(),
        Err(e) => {
            eprintln!("warning: {e}");
            "undefined".into()
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "x_cvp={}", join(&r.x_cvp));
    let _ = writeln!(out, "distance={}", r.distance);
    let _ = writeln!(out, "moves_used={}", r.moves_used);
    let _ = writeln!(out, "acceptance_rate={}", r.acceptance_rate);
    let _ = writeln!(out, "improved_at={}", join(&r.improved_at));
    let _ = writeln!(out, "sigma={sigma}");
    let _ = writeln!(out, "bdd_radius={radius}");
    Ok(out)
}

/// Exact-chain report: δ, δ_MTM, τ₁ against its prediction, mixing times and
/// the exact TV trace from the lowest-weight state.
pub fn cmd_diagnose(cfg: &Config, seed: u64, base_dir: &Path) -> Result<String, CliError> {
    cfg.check_keys(&keys(&[
        "center", "sigma", "mass", "k_grid", "eps_grid", "t_max",
    ]))?;
    let basis = load_basis(cfg, seed, base_dir)?;
    let center = load_center(cfg, basis.dim(), false)?;
    let sigma = resolve_sigma(&basis, sigma_policy(cfg)?)?;
    let mass = open_unit(cfg, "mass", 1.0 - 1e-9)?;
    let ks = cfg
        .get_list::<usize>("k_grid")?
        .unwrap_or_else(|| vec![1, 2, 5, 10]);
    if ks.is_empty() || ks.contains(&0) {
        return Err(invalid("k_grid", "entries must be >= 1"));
    }
    let eps_grid = cfg
        .get_list::<f64>("eps_grid")?
        .unwrap_or_else(|| vec![0.5, 0.1, 0.01, 0.001]);
    for &e in &eps_grid {
        Config::in_range("eps_grid", e, 0.0, 1.0, true)?;
    }
    let t_max = cfg.get::<usize>("t_max", 15)?;

    let spec = GaussianSpec::new(sigma, center)?;
    let space = exact_target(&basis, &spec, mass)?;
    let p = build_mhk_matrix(&space);
    let spectral = spectral_radius_check(&p, &space)?;
    let delta = delta_bound(&basis, &spec, DEFAULT_DELTA_COVERAGE)?;

    let mut out = String::new();
    let _ = writeln!(out, "n={}", basis.dim());
    let _ = writeln!(out, "sigma={sigma}");
    let _ = writeln!(out, "n_states={}", space.len());
    let _ = writeln!(out, "covered_mass={}", space.covered_mass);
    let _ = writeln!(out, "delta={delta}");
    for &k in &ks {
        let _ = writeln!(out, "delta_mtm_k{k}={}", delta_mtm(delta, k)?);
    }
    let _ = writeln!(out, "tau1={}", spectral.tau1);
    let _ = writeln!(out, "tau1_predicted={}", spectral.predicted);
    let _ = writeln!(out, "tau1_residual={}", spectral.residual());
    for &k in &ks {
        let d = delta_mtm(delta, k)?;
        for &e in &eps_grid {
            let (exact, upper) = if d >= EXACT_DELTA {
                (1.0, 1.0)
            } else {
                mixing_time_bound(d, e)?
            };
            let _ = writeln!(out, "t_mix_k{k}_eps{e}={exact} {upper}");
        }
    }
    let trace = exact_tv_trace(&p, &space.pi, space.len() - 1, t_max)?;
    for (t, tv) in trace.iter().enumerate() {
        let _ = writeln!(
            out,
            "tv_t{}={tv} {}",
            t + 1,
            (1.0 - delta).powi(t as i32 + 1)
        );
    }
    Ok(out)
}

pub fn mimo_config(cfg: &Config, seed: u64) -> Result<MimoConfig, CliError> {
    cfg.check_keys(&[
        "seed",
        "out",
        "n_antennas",
        "qam",
        "ebn0_db",
        "frames",
        "moves",
        "k",
        "use_lll",
        "detectors",
    ])?;
    let d = MimoConfig::default();
    let detectors = match cfg.raw("detectors") {
        None => d.detectors.clone(),
        Some(v) => split_list(v)
            .map(str::parse::<DetectorSpec>)
            .collect::<Result<_, _>>()
            .map_err(|e| invalid("detectors", e.to_string()))?,
    };
    let m = MimoConfig {
        n_antennas: positive("n_antennas", cfg.get("n_antennas", d.n_antennas)?)?,
        qam_order: cfg.get("qam", d.qam_order)?,
        ebn0_db: cfg.get_list("ebn0_db")?.unwrap_or(d.ebn0_db),
        frames: positive("frames", cfg.get("frames", d.frames)?)?,
        moves: cfg.get_list("moves")?.unwrap_or(d.moves),
        trials_k: positive("k", cfg.get("k", d.trials_k)?)?,
        use_lll: cfg.get_bool("use_lll", d.use_lll)?,
        seed,
        detectors,
    };
    m.validate().map_err(|e| invalid("ber", e.to_string()))?;
    Ok(m)
}

pub fn cmd_ber(cfg: &Config, seed: u64) -> Result<String, CliError> {
    Ok(run_ber_sweep(&mimo_config(cfg, seed)?)?.to_csv())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Config {
        Config::parse(text).unwrap()
    }

    #[test]
    fn inline_and_random_bases() {
        let b = load_basis(&cfg("basis = 2 1; 0 1"), 1, Path::new(".")).unwrap();
        assert_eq!(b.matrix()[(0, 1)], 1.0);
        let r1 = load_basis(&cfg("basis_random = 3, -4, 4"), 5, Path::new(".")).unwrap();
        let r2 = load_basis(&cfg("basis_random = 3, -4, 4"), 5, Path::new(".")).unwrap();
        assert_eq!(r1, r2);
        assert!(load_basis(&cfg("basis = 2 1; 0"), 1, Path::new(".")).is_err());
        assert!(load_basis(&cfg(""), 1, Path::new(".")).is_err());
        assert!(load_basis(
            &cfg("basis = 1 0; 0 1\nbasis_random = 2,1,2"),
            1,
            Path::new(".")
        )
        .is_err());
    }

    #[test]
    fn one_dimensional_reports() {
        let d = cmd_diagnose(&cfg("basis = 1\nsigma = 1"), 0, Path::new(".")).unwrap();
        assert!(
            d.contains("\ndelta=1\n") || d.contains("\ndelta=0.99999999"),
            "{d}"
        );
        let tau: f64 = d
            .lines()
            .find_map(|l| l.strip_prefix("tau1="))
            .unwrap()
            .parse()
            .unwrap();
        assert!(tau < 1e-9);
        let s = cmd_sample(&cfg("basis = 1\nsigma = 1\npickups = 5"), 0, Path::new(".")).unwrap();
        assert!(s.contains("gap=1 "));
        assert_eq!(s.lines().filter(|l| !l.starts_with('#')).count(), 5);
    }

    #[test]
    fn diagnose_k1_equals_delta() {
        let d = cmd_diagnose(
            &cfg("basis = 2 1; 0 1\nsigma = 0.8\ncenter = 0.5 0.5"),
            0,
            Path::new("."),
        )
        .unwrap();
        let get = |k: &str| {
            d.lines()
                .find_map(|l| l.strip_prefix(&format!("{k}=")))
                .unwrap()
                .to_string()
        };
        assert_eq!(get("delta"), get("delta_mtm_k1"));
        let res: f64 = get("tau1_residual").parse().unwrap();
        assert!(res < 1e-6);
    }

    #[test]
    fn sample_gap_shrinks_with_eps() {
        let gap = |eps: &str| {
            let s = cmd_sample(
                &cfg(&format!(
                    "basis = 2 1; 0 1\nsigma = 0.8\ncenter = 0.5 0.5\npickups = 3\neps = {eps}"
                )),
                0,
                Path::new("."),
            )
            .unwrap();
            let line = s.lines().nth(1).unwrap().to_string();
            line.split("gap=")
                .nth(1)
                .unwrap()
                .split(' ')
                .next()
                .unwrap()
                .parse::<u64>()
                .unwrap()
        };
        assert!(gap("0.5") < gap("0.01"));
    }

    #[test]
    fn decode_planted_record() {
        let r = cmd_decode(
            &cfg("basis = 2 1; 0 1\ncenter = 12 -2\nmoves = 3"),
            9,
            Path::new("."),
        )
        .unwrap();
        assert!(r.contains("distance=0\n"), "{r}");
        assert!(r.contains("x_cvp=7 -2\n"), "{r}");
    }

    #[test]
    fn validation_messages_name_fields() {
        let e = cmd_decode(
            &cfg("basis = 1 0; 0 1\ncenter = 0 0\neps = 2"),
            0,
            Path::new("."),
        )
        .unwrap_err();
        assert!(e.to_string().contains("eps"));
        let e = cmd_decode(
            &cfg("basis = 1 0; 0 1\ncenter = 0 0\ntypo = 2"),
            0,
            Path::new("."),
        )
        .unwrap_err();
        assert!(e.to_string().contains("typo"));
        let e = cmd_ber(&cfg("qam = 8"), 0).unwrap_err();
        assert!(e.to_string().contains("QAM"));
    }
}
