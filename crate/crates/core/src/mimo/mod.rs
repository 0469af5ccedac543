//! Uncoded MIMO detection experiment: random complex channels, Gray QAM,
//! ZF / Gibbs / MHK / MTMK detectors and BER sweeps with common random
//! numbers.
//!
//! Every frame owns its random streams, derived from `(seed, frame)`, so the
//! channel, bits and unit noise of frame `f` are identical across SNR points,
//! move counts and detectors. Frames run in parallel and aggregate by
//! summation in frame order, so results do not depend on the thread count.

pub mod channel;
pub mod llr;
pub mod qam;

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::decoder::{decode_cvp, ChainKind, DecodeConfig, SigmaPolicy};
use crate::error::{LatticeError, Result};
use crate::rng::{stream_rng, substream};

pub use channel::{complex_normal, embed_real, real_embedding, ComplexChannel, EmbeddedSystem};
pub use llr::{llr_compute, LLR_CLAMP};
pub use qam::Qam;

const PURPOSE_BITS: u32 = 8;
const CHANNEL_STREAM: u64 = 0;
const BITS_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const DECODE_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    Zf,
    Gibbs,
    Mhk,
    Mtmk,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::Zf => "zf",
            Detector::Gibbs => "gibbs",
            Detector::Mhk => "mhk",
            Detector::Mtmk => "mtmk",
        }
    }
}

/// A detector together with its reduction setting. Parsed from `zf`, `gibbs`,
/// `mhk`, `mtmk`, optionally suffixed with `+lll` or `-lll` (no suffix: use
/// the sweep's `use_lll` default).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectorSpec {
    pub detector: Detector,
    pub lll: Option<bool>,
}

impl FromStr for DetectorSpec {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, lll) = if let Some(base) = s.strip_suffix("+lll") {
            (base, Some(true))
        } else if let Some(base) = s.strip_suffix("-lll") {
            (base, Some(false))
        } else {
            (s.as_str(), None)
        };
        let detector = match name {
            "zf" => Detector::Zf,
            "gibbs" => Detector::Gibbs,
            "mhk" => Detector::Mhk,
            "mtmk" => Detector::Mtmk,
            other => return Err(LatticeError::Parse(format!("unknown detector '{other}'"))),
        };
        Ok(DetectorSpec { detector, lll })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimoConfig {
    pub n_antennas: usize,
    pub qam_order: usize,
    pub ebn0_db: Vec<f64>,
    pub frames: u64,
    /// One entry runs an SNR sweep; several entries add a moves sweep.
    pub moves: Vec<u64>,
    pub trials_k: usize,
    pub use_lll: bool,
    pub seed: u64,
    pub detectors: Vec<DetectorSpec>,
}

impl Default for MimoConfig {
    fn default() -> Self {
        MimoConfig {
            n_antennas: 4,
            qam_order: 16,
            ebn0_db: vec![15.0],
            frames: 100,
            moves: vec![20],
            trials_k: 10,
            use_lll: false,
            seed: 0,
            detectors: ["zf", "gibbs", "mhk", "mtmk"]
                .iter()
                .map(|s| s.parse().unwrap())
                .collect(),
        }
    }
}

impl MimoConfig {
    pub fn validate(&self) -> Result<()> {
        Qam::new(self.qam_order)?;
        if self.n_antennas < 1 {
            return Err(LatticeError::Domain("n_antennas must be >= 1".into()));
        }
        if self.frames < 1 || self.frames >= 1 << 32 {
            return Err(LatticeError::Domain("frames must be in [1, 2^32)".into()));
        }
        if self.ebn0_db.is_empty() || self.ebn0_db.len() > 1 << PURPOSE_BITS {
            return Err(LatticeError::Domain(
                "ebn0_db needs between 1 and 256 values".into(),
            ));
        }
        if self.ebn0_db.iter().any(|v| !v.is_finite()) {
            return Err(LatticeError::Domain("ebn0_db values must be finite".into()));
        }
        if self.moves.is_empty() || self.moves.contains(&0) {
            return Err(LatticeError::Domain(
                "moves must be a non-empty list of values >= 1".into(),
            ));
        }
        if self.trials_k < 1 {
            return Err(LatticeError::Domain("trials_k must be >= 1".into()));
        }
        if self.detectors.is_empty() {
            return Err(LatticeError::Domain("detectors must be non-empty".into()));
        }
        Ok(())
    }

    pub fn qam(&self) -> Qam {
        Qam::new(self.qam_order).expect("validated order")
    }

    pub fn bits_per_frame(&self) -> usize {
        self.n_antennas * self.qam().bits_per_symbol()
    }

    fn resolve_lll(&self, d: DetectorSpec) -> bool {
        d.detector != Detector::Zf && d.lll.unwrap_or(self.use_lll)
    }

    /// All `(snr, moves, detector)` cells in output order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (snr_index, &ebn0_db) in self.ebn0_db.iter().enumerate() {
            for &moves in &self.moves {
                for &d in &self.detectors {
                    out.push(Cell {
                        snr_index,
                        ebn0_db,
                        moves,
                        detector: d.detector,
                        use_lll: self.resolve_lll(d),
                        k: if d.detector == Detector::Mtmk {
                            self.trials_k
                        } else {
                            1
                        },
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub snr_index: usize,
    pub ebn0_db: f64,
    pub moves: u64,
    pub detector: Detector,
    pub use_lll: bool,
    pub k: usize,
}

/// Complex noise variance `σ_w² = n / (log₂M · E_b/N₀)`; each real
/// component carries half of it.
pub fn noise_variance(n_antennas: usize, qam_order: usize, ebn0_db: f64) -> f64 {
    let ebn0 = 10f64.powf(ebn0_db / 10.0);
    n_antennas as f64 / ((qam_order as f64).log2() * ebn0)
}

/// The per-frame random draws shared by every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub channel: ComplexChannel,
    pub bits: Vec<u8>,
    pub symbols: Vec<Complex64>,
    /// CN(0, 1) noise, scaled by `σ_w` per SNR point.
    pub unit_noise: Vec<Complex64>,
}

pub fn generate_frame(cfg: &MimoConfig, frame: u64) -> Frame {
    let qam = cfg.qam();
    let n = cfg.n_antennas;
    let mut rng = stream_rng(cfg.seed, substream(frame, CHANNEL_STREAM, PURPOSE_BITS));
    let channel = ComplexChannel::random(n, &mut rng);
    let mut rng = stream_rng(cfg.seed, substream(frame, BITS_STREAM, PURPOSE_BITS));
    let bits: Vec<u8> = (0..cfg.bits_per_frame())
        .map(|_| rng.random_range(0..=1u8))
        .collect();
    let mut rng = stream_rng(cfg.seed, substream(frame, NOISE_STREAM, PURPOSE_BITS));
    let unit_noise = (0..n).map(|_| complex_normal(&mut rng)).collect();
    let symbols = qam.modulate(&bits).expect("bit count matches");
    Frame {
        channel,
        bits,
        symbols,
        unit_noise,
    }
}

impl Frame {
    pub fn received(&self, sigma_w2: f64) -> Vec<Complex64> {
        let s = sigma_w2.sqrt();
        self.channel
            .apply(&self.symbols)
            .into_iter()
            .zip(&self.unit_noise)
            .map(|(hx, w)| hx + w * s)
            .collect()
    }
}

/// Parameters for the sampling detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub moves: u64,
    pub trials_k: usize,
    pub use_lll: bool,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Decided levels, inside the constellation box.
    pub levels: Vec<i64>,
    /// `None` for ZF.
    pub acceptance: Option<f64>,
}

/// Runs one detector on an embedded system. Sampling detectors decode over
/// the unconstrained lattice and clip the answer onto the constellation.
pub fn detect(sys: &EmbeddedSystem, detector: Detector, p: &DetectParams) -> Result<Detection> {
    if detector == Detector::Zf {
        let inv = sys
            .basis
            .matrix()
            .clone()
            .lu()
            .solve(&sys.c)
            .ok_or_else(|| LatticeError::Numerical("channel matrix is singular".into()))?;
        let z: Vec<i64> = inv.iter().map(|v| v.round() as i64).collect();
        return Ok(Detection {
            levels: sys.clip(&z),
            acceptance: None,
        });
    }
    let cfg = DecodeConfig {
        sigma_policy: SigmaPolicy::Default2SqrtPi,
        moves: p.moves,
        trials_k: if detector == Detector::Mtmk {
            p.trials_k
        } else {
            1
        },
        use_lll: p.use_lll,
        seed: p.seed,
        stream: p.stream,
        shards: 1,
        chain: if detector == Detector::Gibbs {
            ChainKind::Gibbs
        } else {
            ChainKind::Klein
        },
        ..DecodeConfig::default()
    };
    let r = decode_cvp(&sys.basis, &sys.c, &cfg)?;
    Ok(Detection {
        levels: sys.clip(&r.x_cvp),
        acceptance: Some(r.acceptance_rate),
    })
}

/// Per-frame results, indexed like [`MimoConfig::cells`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub bit_errors: Vec<u64>,
    pub acceptance: Vec<Option<f64>>,
    /// `‖B z_true − c‖²` per SNR point.
    pub residual_sq: Vec<f64>,
}

pub fn run_frame(cfg: &MimoConfig, frame_index: u64) -> Result<FrameOutcome> {
    let frame = generate_frame(cfg, frame_index);
    let qam = cfg.qam();
    let mut systems = Vec::with_capacity(cfg.ebn0_db.len());
    let mut residual_sq = Vec::with_capacity(cfg.ebn0_db.len());
    for &snr in &cfg.ebn0_db {
        let rx = frame.received(noise_variance(cfg.n_antennas, cfg.qam_order, snr));
        let sys = embed_real(&frame.channel, &rx, qam)?;
        let truth = sys.bits_to_levels(&frame.bits);
        residual_sq.push(sys.basis.dist_sq(&truth, &sys.c));
        systems.push(sys);
    }
    let mut out = FrameOutcome {
        bit_errors: Vec::new(),
        acceptance: Vec::new(),
        residual_sq,
    };
    for cell in cfg.cells() {
        let sys = &systems[cell.snr_index];
        let params = DetectParams {
            moves: cell.moves,
            trials_k: cell.k,
            use_lll: cell.use_lll,
            seed: cfg.seed,
            stream: substream(
                substream(frame_index, DECODE_STREAM, PURPOSE_BITS),
                cell.snr_index as u64,
                PURPOSE_BITS,
            ),
        };
        let d = detect(sys, cell.detector, &params)?;
        let decided = sys.levels_to_bits(&d.levels);
        let errors = decided
            .iter()
            .zip(&frame.bits)
            .filter(|(a, b)| a != b)
            .count() as u64;
        out.bit_errors.push(errors);
        out.acceptance.push(d.acceptance);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub cell: Cell,
    pub frames: u64,
    pub bit_errors: u64,
    pub bits_total: u64,
    pub ber: f64,
    /// `None` for ZF.
    pub mean_acceptance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
    /// `frame_errors[f][cell]`, kept for paired comparisons.
    pub frame_errors: Vec<Vec<u64>>,
    /// `residual_sq[f][snr]`.
    pub residual_sq: Vec<Vec<f64>>,
}

pub const CSV_HEADER: &str =
    "ebn0_db,detector,use_lll,moves,k,frames,bit_errors,bits_total,ber,mean_acceptance";

impl SimResult {
    pub fn row(
        &self,
        ebn0_db: f64,
        moves: u64,
        detector: Detector,
        use_lll: bool,
    ) -> Option<&SimRow> {
        self.rows.iter().find(|r| {
            r.cell.ebn0_db == ebn0_db
                && r.cell.moves == moves
                && r.cell.detector == detector
                && r.cell.use_lll == use_lll
        })
    }

    /// CSV text; ZF rows leave `mean_acceptance` as `nan`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                format_g6(r.cell.ebn0_db),
                r.cell.detector.name(),
                u8::from(r.cell.use_lll),
                r.cell.moves,
                r.cell.k,
                r.frames,
                r.bit_errors,
                r.bits_total,
                format_g6(r.ber),
                format_g6(r.mean_acceptance.unwrap_or(f64::NAN)),
            );
        }
        s
    }
}

pub fn run_ber_sweep(cfg: &MimoConfig) -> Result<SimResult> {
    cfg.validate()?;
    let outcomes: Vec<FrameOutcome> = (0..cfg.frames)
        .into_par_iter()
        .map(|f| run_frame(cfg, f))
        .collect::<Result<_>>()?;
    let cells = cfg.cells();
    let bits_total = cfg.frames * cfg.bits_per_frame() as u64;
    let rows = cells
        .iter()
        .enumerate()
        .map(|(i, &cell)| {
            let bit_errors: u64 = outcomes.iter().map(|o| o.bit_errors[i]).sum();
            let mean_acceptance = match cell.detector {
                Detector::Zf => None,
                _ => Some(
                    outcomes
                        .iter()
                        .map(|o| o.acceptance[i].unwrap_or(0.0))
                        .sum::<f64>()
                        / cfg.frames as f64,
                ),
            };
            SimRow {
                cell,
                frames: cfg.frames,
                bit_errors,
                bits_total,
                ber: bit_errors as f64 / bits_total as f64,
                mean_acceptance,
            }
        })
        .collect();
    Ok(SimResult {
        rows,
        frame_errors: outcomes.iter().map(|o| o.bit_errors.clone()).collect(),
        residual_sq: outcomes.into_iter().map(|o| o.residual_sq).collect(),
    })
}

/// `printf("%g")`-style formatting with 6 significant digits.
pub fn format_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    fn trim(s: &str) -> &str {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.')
        } else {
            s
        }
    }
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}")).to_string()
    }
}

/// Mean of an i.i.d. sample with its standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Real noise vector of a frame at a given SNR, for calibration checks.
pub fn real_noise(frame: &Frame, sigma_w2: f64) -> DVector<f64> {
    channel::real_vector(&frame.unit_noise) * sigma_w2.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(detectors: &[&str]) -> MimoConfig {
        MimoConfig {
            n_antennas: 2,
            qam_order: 16,
            ebn0_db: vec![5.0, 25.0],
            frames: 30,
            moves: vec![5],
            trials_k: 3,
            use_lll: true,
            seed: 11,
            detectors: detectors.iter().map(|s| s.parse().unwrap()).collect(),
        }
    }

    #[test]
    fn format_g6_cases() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (15.0, "15"),
            (0.5, "0.5"),
            (1.0 / 3.0, "0.333333"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5, "-2.5"),
            (999999.5, "1e+06"),
            (f64::NAN, "nan"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g6(x), want, "{x}");
        }
    }

    #[test]
    fn detector_parsing() {
        let d: DetectorSpec = "MHK+lll".parse().unwrap();
        assert_eq!(
            d,
            DetectorSpec {
                detector: Detector::Mhk,
                lll: Some(true)
            }
        );
        assert_eq!(
            "gibbs-lll".parse::<DetectorSpec>().unwrap().lll,
            Some(false)
        );
        assert!("sphere".parse::<DetectorSpec>().is_err());
    }

    #[test]
    fn noise_variance_formula() {
        assert!((noise_variance(4, 16, 0.0) - 1.0).abs() < 1e-15);
        assert!((noise_variance(8, 16, 10.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn frames_are_reproducible_and_distinct() {
        let cfg = small(&["zf"]);
        assert_eq!(generate_frame(&cfg, 3), generate_frame(&cfg, 3));
        assert_ne!(generate_frame(&cfg, 3), generate_frame(&cfg, 4));
    }

    #[test]
    fn noiseless_frames_detected_exactly() {
        let cfg = small(&["zf", "gibbs", "mhk", "mtmk", "mhk+lll"]);
        for f in 0..10 {
            let frame = generate_frame(&cfg, f);
            let rx = frame.received(0.0);
            let sys = embed_real(&frame.channel, &rx, cfg.qam()).unwrap();
            let truth = sys.bits_to_levels(&frame.bits);
            for d in [Detector::Zf, Detector::Gibbs, Detector::Mhk, Detector::Mtmk] {
                for lll in [false, true] {
                    let p = DetectParams {
                        moves: 3,
                        trials_k: 3,
                        use_lll: lll,
                        seed: 1,
                        stream: f,
                    };
                    assert_eq!(
                        detect(&sys, d, &p).unwrap().levels,
                        truth,
                        "{d:?} lll={lll}"
                    );
                }
            }
        }
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let cfg = MimoConfig {
            moves: vec![1, 4],
            ..small(&["zf", "mhk", "mtmk+lll"])
        };
        let r = run_ber_sweep(&cfg).unwrap();
        assert_eq!(r.rows.len(), 2 * 2 * 3);
        let csv = r.to_csv();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(csv.lines().count(), 13);
        for line in csv.lines().skip(1) {
            assert_eq!(line.split(',').count(), 10);
        }
        assert_eq!(csv, run_ber_sweep(&cfg).unwrap().to_csv());
        for row in &r.rows {
            assert_eq!(row.bits_total, 30 * 8);
            assert_eq!(row.ber, row.bit_errors as f64 / row.bits_total as f64);
        }
        // ZF ignores LLL and moves
        let zf = r.row(5.0, 1, Detector::Zf, false).unwrap();
        assert_eq!(
            zf.bit_errors,
            r.row(5.0, 4, Detector::Zf, false).unwrap().bit_errors
        );
        assert!(zf.mean_acceptance.is_none());
    }

    #[test]
    fn smoke_single_frame() {
        let cfg = MimoConfig {
            frames: 1,
            moves: vec![1],
            ..small(&["zf", "gibbs", "mhk", "mtmk"])
        };
        let r = run_ber_sweep(&cfg).unwrap();
        assert_eq!(r.rows.len(), 2 * 4);
    }

    #[test]
    fn high_snr_beats_low_snr() {
        let cfg = small(&["zf", "mhk"]);
        let r = run_ber_sweep(&cfg).unwrap();
        for d in [Detector::Zf, Detector::Mhk] {
            let lll = d != Detector::Zf;
            assert!(r.row(25.0, 5, d, lll).unwrap().ber <= r.row(5.0, 5, d, lll).unwrap().ber);
        }
    }

    #[test]
    fn zf_random_guessing_at_huge_noise() {
        let cfg = MimoConfig {
            ebn0_db: vec![-40.0],
            frames: 400,
            ..small(&["zf"])
        };
        let r = run_ber_sweep(&cfg).unwrap();
        let ber = r.rows[0].ber;
        // random guessing gives BER 1/2; 400 frames x 8 bits
        assert!((ber - 0.5).abs() < 4.0 * (0.25f64 / 3200.0).sqrt(), "{ber}");
    }

    #[test]
    fn noise_calibration() {
        let cfg = MimoConfig {
            n_antennas: 5,
            ..small(&["zf"])
        };
        let s2 = noise_variance(5, 16, 7.0);
        let mut total = 0.0;
        let mut count = 0usize;
        for f in 0..20_000 {
            let w = real_noise(&generate_frame(&cfg, f), s2);
            total += w.norm_squared();
            count += w.len();
        }
        // each real component carries σ_w²/2
        let per_real = total / count as f64;
        assert!((per_real / (s2 / 2.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn config_validation() {
        let ok = small(&["zf"]);
        assert!(ok.validate().is_ok());
        for bad in [
            MimoConfig {
                qam_order: 8,
                ..ok.clone()
            },
            MimoConfig {
                frames: 0,
                ..ok.clone()
            },
            MimoConfig {
                moves: vec![],
                ..ok.clone()
            },
            MimoConfig {
                moves: vec![0],
                ..ok.clone()
            },
            MimoConfig {
                trials_k: 0,
                ..ok.clone()
            },
            MimoConfig {
                detectors: vec![],
                ..ok.clone()
            },
            MimoConfig {
                ebn0_db: vec![],
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
