//! The single-precision GEMM recipes under comparison.
//!
//! All schemes accumulate every output element in ascending `k` over a fixed
//! `block_k` schedule, so results are bit-reproducible regardless of how
//! output elements are distributed over threads.

use std::fmt;
use std::str::FromStr;

use crate::analysis::relative_residual;
use crate::error::{Error, Result};
use crate::fpkit::{exp2i, round_to_format, ulp_distance_f32, FloatFormat, RoundingMode};
use crate::genmat::InputDist;
use crate::matrix::Matrix;
use crate::mma_emu::{mma_element, MmaConfig};
use crate::split::{classify_representability, split_matrix, Representability, SplitScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GemmScheme {
    /// Binary64 products and sums; the accuracy reference.
    Fp64Ref,
    /// Sequential FP32 dot products with RN, no FMA.
    Fp32Simt,
    /// `Fp32Simt` on inputs whose last fraction bit is cleared.
    Fp32LsbTrunc,
    /// Inputs rounded to the format, accumulated in the unit.
    TcPlain(FloatFormat),
    /// Unscaled split, all four products accumulated in the unit.
    Markidis4(FloatFormat),
    /// Four-term in-unit accumulation with a chosen write-back rounding.
    Corrected4 {
        split: SplitScheme,
        terminal: RoundingMode,
    },
    /// Main term accumulated outside the unit with FP32 RN, the two
    /// correction terms inside it, the ΔA·ΔB term dropped.
    Corrected3(SplitScheme),
    /// `Corrected3` with the ΔA·ΔB term kept in its own in-unit fragment.
    Corrected3Full(SplitScheme),
}

impl GemmScheme {
    /// Every name accepted by [`GemmScheme::from_str`].
    pub const NAMES: [&'static str; 11] = [
        "fp64_ref",
        "fp32_simt",
        "fp32_lsbtrunc",
        "tc_plain_fp16",
        "tc_plain_tf32",
        "markidis4",
        "corrected4_rn",
        "corrected4_rz",
        "corrected3_halfhalf",
        "corrected3_tf32",
        "corrected3full_halfhalf",
    ];

    /// The split used by the corrected schemes, if any.
    pub fn split_scheme(self) -> Option<SplitScheme> {
        match self {
            GemmScheme::Markidis4(fmt) => Some(markidis_split(fmt)),
            GemmScheme::Corrected4 { split, .. }
            | GemmScheme::Corrected3(split)
            | GemmScheme::Corrected3Full(split) => Some(split),
            _ => None,
        }
    }
}

fn markidis_split(fmt: FloatFormat) -> SplitScheme {
    if fmt == FloatFormat::TF32 {
        SplitScheme::TF32TF32
    } else {
        SplitScheme::MARKIDIS
    }
}

fn plain_rounding(fmt: FloatFormat) -> RoundingMode {
    if fmt == FloatFormat::TF32 {
        RoundingMode::NearestAway
    } else {
        RoundingMode::NearestEven
    }
}

impl fmt::Display for GemmScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fmt_name = |fmt: &FloatFormat| {
            if *fmt == FloatFormat::TF32 {
                "tf32"
            } else {
                "fp16"
            }
        };
        match self {
            GemmScheme::Fp64Ref => f.write_str("fp64_ref"),
            GemmScheme::Fp32Simt => f.write_str("fp32_simt"),
            GemmScheme::Fp32LsbTrunc => f.write_str("fp32_lsbtrunc"),
            GemmScheme::TcPlain(fmt) => write!(f, "tc_plain_{}", fmt_name(fmt)),
            GemmScheme::Markidis4(fmt) if *fmt == FloatFormat::FP16 => f.write_str("markidis4"),
            GemmScheme::Markidis4(fmt) => write!(f, "markidis4_{}", fmt_name(fmt)),
            GemmScheme::Corrected4 { split, terminal } if *split == SplitScheme::MARKIDIS => {
                write!(f, "corrected4_{terminal}")
            }
            GemmScheme::Corrected4 { split, terminal } => {
                write!(f, "corrected4_{terminal}[{split}]")
            }
            GemmScheme::Corrected3(split) | GemmScheme::Corrected3Full(split) => {
                let stem = if matches!(self, GemmScheme::Corrected3(_)) {
                    "corrected3"
                } else {
                    "corrected3full"
                };
                match *split {
                    SplitScheme::HALFHALF => write!(f, "{stem}_halfhalf"),
                    SplitScheme::TF32TF32 => write!(f, "{stem}_tf32"),
                    other => write!(f, "{stem}[{other}]"),
                }
            }
        }
    }
}

impl FromStr for GemmScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "fp64_ref" => GemmScheme::Fp64Ref,
            "fp32_simt" => GemmScheme::Fp32Simt,
            "fp32_lsbtrunc" => GemmScheme::Fp32LsbTrunc,
            "tc_plain_fp16" => GemmScheme::TcPlain(FloatFormat::FP16),
            "tc_plain_tf32" => GemmScheme::TcPlain(FloatFormat::TF32),
            "markidis4" => GemmScheme::Markidis4(FloatFormat::FP16),
            "corrected4_rn" => GemmScheme::Corrected4 {
                split: SplitScheme::MARKIDIS,
                terminal: RoundingMode::NearestEven,
            },
            "corrected4_rz" => GemmScheme::Corrected4 {
                split: SplitScheme::MARKIDIS,
                terminal: RoundingMode::TowardZero,
            },
            "corrected3_halfhalf" => GemmScheme::Corrected3(SplitScheme::HALFHALF),
            "corrected3_tf32" => GemmScheme::Corrected3(SplitScheme::TF32TF32),
            "corrected3full_halfhalf" => GemmScheme::Corrected3Full(SplitScheme::HALFHALF),
            _ => {
                return Err(Error::Parse {
                    what: "GEMM scheme",
                    input: s.to_string(),
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunFlags {
    pub saw_overflow: bool,
    pub saw_out_of_range: bool,
}

impl fmt::Display for RunFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.saw_out_of_range {
            parts.push("out_of_range");
        }
        if self.saw_overflow {
            parts.push("overflow");
        }
        f.write_str(&parts.join(";"))
    }
}

/// Result of one scheme on one input pair. `output` holds FP32 values for
/// every scheme except [`GemmScheme::Fp64Ref`].
#[derive(Debug, Clone, PartialEq)]
pub struct GemmRun {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub scheme: GemmScheme,
    pub output: Matrix<f64>,
    pub flags: RunFlags,
}

impl GemmRun {
    pub fn output_f32(&self) -> Matrix<f32> {
        self.output.map(|&v| v as f32)
    }
}

/// Row-major operands in a low-precision format, with B stored transposed so
/// both operands of a dot product are contiguous.
struct Operands {
    a: Matrix<f64>,
    bt: Matrix<f64>,
}

impl Operands {
    fn new(a: Matrix<f64>, b: &Matrix<f64>) -> Self {
        let bt = Matrix::from_fn(b.cols(), b.rows(), |i, j| b.at(j, i));
        Operands { a, bt }
    }

    fn row(&self, i: usize) -> &[f64] {
        let k = self.a.cols();
        &self.a.as_slice()[i * k..(i + 1) * k]
    }

    fn col(&self, j: usize) -> &[f64] {
        let k = self.bt.cols();
        &self.bt.as_slice()[j * k..(j + 1) * k]
    }
}

/// Block `[start, end)` of a full-length row.
#[inline]
fn dot(a: &[f64], b: &[f64], start: usize, end: usize, c: f64, cfg: &MmaConfig) -> f64 {
    mma_element(
        a[start..end].iter().copied(),
        b[start..end].iter().copied(),
        c,
        cfg,
    )
}

fn blocks(k: usize, block_k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k)
        .step_by(block_k)
        .map(move |s| (s, (s + block_k).min(k)))
}

fn check_shapes(a: &Matrix<f32>, b: &Matrix<f32>) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn any_out_of_range(m: &Matrix<f32>, split: SplitScheme) -> bool {
    m.iter()
        .any(|&v| classify_representability(v, split) == Representability::OutOfRange)
}

pub fn gemm(
    a: &Matrix<f32>,
    b: &Matrix<f32>,
    scheme: GemmScheme,
    cfg: &MmaConfig,
) -> Result<GemmRun> {
    check_shapes(a, b)?;
    cfg.validate()?;
    let (m, k) = a.shape();
    let n = b.cols();
    let mut flags = RunFlags::default();

    let output = match scheme {
        GemmScheme::Fp64Ref => a.to_f64().matmul_sequential(&b.to_f64())?,
        GemmScheme::Fp32Simt => a.matmul_sequential(b)?.to_f64(),
        GemmScheme::Fp32LsbTrunc => {
            let clear = |v: &f32| f32::from_bits(v.to_bits() & !1);
            a.map(clear).matmul_sequential(&b.map(clear))?.to_f64()
        }
        GemmScheme::TcPlain(fmt) => {
            let mode = plain_rounding(fmt);
            let lower = |x: &f32| round_to_format(*x as f64, fmt, mode);
            let (al, bl) = (a.map(lower), b.map(lower));
            flags.saw_out_of_range = a
                .iter()
                .zip(al.iter())
                .chain(b.iter().zip(bl.iter()))
                .any(|(&x, &l)| !l.is_finite() || (x != 0.0 && l == 0.0));
            let ops = Operands::new(al, &bl);
            let unit = cfg.with_input_format(fmt);
            Matrix::par_from_fn(m, n, |i, j| {
                let (row, col) = (ops.row(i), ops.col(j));
                blocks(k, cfg.block_k).fold(0.0, |c, (s, e)| dot(row, col, s, e, c, &unit))
            })
        }
        GemmScheme::Markidis4(_) | GemmScheme::Corrected4 { .. } => {
            let (split, terminal) = match scheme {
                GemmScheme::Corrected4 { split, terminal } => (split, terminal),
                GemmScheme::Markidis4(fmt) => (markidis_split(fmt), cfg.terminal_rounding),
                _ => unreachable!(),
            };
            if split.scale_log2() != 0 {
                return Err(Error::Unsupported(format!(
                    "{split} cannot share one accumulator across terms of different scale"
                )));
            }
            flags.saw_out_of_range = any_out_of_range(a, split) || any_out_of_range(b, split);
            let unit = cfg
                .with_input_format(split.format())
                .with_terminal(terminal);
            let (sa, sb) = (split_matrix(a, split), split_matrix(b, split));
            let hi = Operands::new(sa.hi, &sb.hi);
            let lo = Operands::new(sa.lo, &sb.lo);
            Matrix::par_from_fn(m, n, |i, j| {
                let (ah, bh) = (hi.row(i), hi.col(j));
                let (al, bl) = (lo.row(i), lo.col(j));
                let mut c = 0.0;
                for (s, e) in blocks(k, cfg.block_k) {
                    c = dot(al, bl, s, e, c, &unit);
                    c = dot(al, bh, s, e, c, &unit);
                    c = dot(ah, bl, s, e, c, &unit);
                    c = dot(ah, bh, s, e, c, &unit);
                }
                c
            })
        }
        GemmScheme::Corrected3(split) | GemmScheme::Corrected3Full(split) => {
            let keep_delta_delta = matches!(scheme, GemmScheme::Corrected3Full(_));
            flags.saw_out_of_range = any_out_of_range(a, split) || any_out_of_range(b, split);
            let unit = cfg.with_input_format(split.format());
            let (sa, sb) = (split_matrix(a, split), split_matrix(b, split));
            let hi = Operands::new(sa.hi, &sb.hi);
            let lo = Operands::new(sa.lo, &sb.lo);
            let s = split.scale_log2();
            let unscale = exp2i(-s) as f32;
            let unscale2 = exp2i(-2 * s) as f32;
            Matrix::par_from_fn(m, n, |i, j| {
                let (ah, bh) = (hi.row(i), hi.col(j));
                let (al, bl) = (lo.row(i), lo.col(j));
                let mut c = 0.0f32;
                let mut dc = 0.0;
                let mut ddc = 0.0;
                for (s, e) in blocks(k, cfg.block_k) {
                    if keep_delta_delta {
                        ddc = dot(al, bl, s, e, ddc, &unit);
                    }
                    dc = dot(al, bh, s, e, dc, &unit);
                    dc = dot(ah, bl, s, e, dc, &unit);
                    let tmp = dot(ah, bh, s, e, 0.0, &unit);
                    c += tmp as f32;
                }
                c += dc as f32 * unscale;
                if keep_delta_delta {
                    c += ddc as f32 * unscale2;
                }
                c as f64
            })
        }
    };

    flags.saw_overflow = output.iter().any(|v| !v.is_finite());
    Ok(GemmRun {
        m,
        n,
        k,
        scheme,
        output,
        flags,
    })
}

/// Mean of `values`; `0` for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Relative residual of `scheme` against [`GemmScheme::Fp64Ref`] on one pair.
pub fn scheme_residual(
    a: &Matrix<f32>,
    b: &Matrix<f32>,
    scheme: GemmScheme,
    cfg: &MmaConfig,
) -> Result<(f64, RunFlags)> {
    let reference = gemm(a, b, GemmScheme::Fp64Ref, cfg)?.output;
    let run = gemm(a, b, scheme, cfg)?;
    Ok((relative_residual(&run.output, &reference)?, run.flags))
}

/// One line of the terminal-rounding comparison. `seed == None` marks the
/// average over all seeds of that size.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalRoundingRow {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub seed: Option<u64>,
    pub residual_rn: f64,
    pub residual_rz: f64,
    pub residual_fp32: f64,
}

/// Four-term in-unit accumulation with write-back RN versus RZ, against
/// plain FP32, over every size and seed.
pub fn compare_terminal_rounding(
    sizes: &[(usize, usize, usize)],
    dist: &InputDist,
    seeds: &[u64],
    cfg: &MmaConfig,
) -> Result<Vec<TerminalRoundingRow>> {
    let rn = GemmScheme::Corrected4 {
        split: SplitScheme::MARKIDIS,
        terminal: RoundingMode::NearestEven,
    };
    let rz = GemmScheme::Corrected4 {
        split: SplitScheme::MARKIDIS,
        terminal: RoundingMode::TowardZero,
    };
    let mut rows = Vec::new();
    for &(m, n, k) in sizes {
        let mut per_seed = Vec::new();
        for &seed in seeds {
            let (a, b) = dist.pair(m, n, k, seed)?;
            let reference = gemm(&a, &b, GemmScheme::Fp64Ref, cfg)?.output;
            let res = |scheme| -> Result<f64> {
                relative_residual(&gemm(&a, &b, scheme, cfg)?.output, &reference)
            };
            per_seed.push(TerminalRoundingRow {
                m,
                n,
                k,
                seed: Some(seed),
                residual_rn: res(rn)?,
                residual_rz: res(rz)?,
                residual_fp32: res(GemmScheme::Fp32Simt)?,
            });
        }
        let avg = |f: fn(&TerminalRoundingRow) -> f64| {
            mean(&per_seed.iter().map(f).collect::<Vec<_>>())
        };
        let summary = TerminalRoundingRow {
            m,
            n,
            k,
            seed: None,
            residual_rn: avg(|r| r.residual_rn),
            residual_rz: avg(|r| r.residual_rz),
            residual_fp32: avg(|r| r.residual_fp32),
        };
        rows.extend(per_seed);
        rows.push(summary);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaAblation {
    pub three_term: Matrix<f32>,
    pub four_term: Matrix<f32>,
    pub max_ulp_diff: u64,
}

/// Runs the corrected scheme with and without the ΔA·ΔB product and reports
/// the largest elementwise difference in FP32 ulps.
pub fn delta_term_ablation(
    a: &Matrix<f32>,
    b: &Matrix<f32>,
    split: SplitScheme,
    cfg: &MmaConfig,
) -> Result<DeltaAblation> {
    let three_term = gemm(a, b, GemmScheme::Corrected3(split), cfg)?.output_f32();
    let four_term = gemm(a, b, GemmScheme::Corrected3Full(split), cfg)?.output_f32();
    let max_ulp_diff = three_term
        .iter()
        .zip(four_term.iter())
        .map(|(&x, &y)| ulp_distance_f32(x, y))
        .max()
        .unwrap_or(0);
    Ok(DeltaAblation {
        three_term,
        four_term,
        max_ulp_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpkit::RoundingMode::*;
    use crate::genmat::{generate, Distribution, MatrixSpec};
    use crate::mma_emu::{block_fragments, emu_mma_chain};

    fn fp16_exact(rows: usize, cols: usize, seed: u64) -> Matrix<f32> {
        let m = generate(&MatrixSpec::new(rows, cols, Distribution::Urand { lo: -1.0, hi: 1.0 }, seed))
            .unwrap();
        m.map(|&v| round_to_format(v as f64, FloatFormat::FP16, NearestEven) as f32)
    }

    #[test]
    fn scheme_names_round_trip() {
        for name in GemmScheme::NAMES {
            let scheme: GemmScheme = name.parse().unwrap();
            assert_eq!(scheme.to_string(), name);
        }
        assert!("sgemm".parse::<GemmScheme>().is_err());
    }

    #[test]
    fn identity_times_fp16_exact_matrix_is_exact() {
        let id = Matrix::<f32>::identity(16);
        let b = fp16_exact(16, 16, 5);
        for name in GemmScheme::NAMES {
            let scheme: GemmScheme = name.parse().unwrap();
            let run = gemm(&id, &b, scheme, &MmaConfig::default()).unwrap();
            assert_eq!(run.output, b.to_f64(), "{name}");
            assert_eq!(run.flags, RunFlags::default());
        }
    }

    #[test]
    fn plain_scheme_matches_block_chain() {
        let a = fp16_exact(4, 40, 1);
        let b = fp16_exact(40, 3, 2);
        let cfg = MmaConfig::default().with_block_k(8);
        let run = gemm(&a, &b, GemmScheme::TcPlain(FloatFormat::FP16), &cfg).unwrap();
        let (ab, bb) = block_fragments(&a.to_f64(), &b.to_f64(), FloatFormat::FP16, 8).unwrap();
        let chained = emu_mma_chain(&ab, &bb, &Matrix::zeros(4, 3), &cfg).unwrap();
        assert_eq!(run.output_f32(), chained);
    }

    #[test]
    fn markidis4_is_corrected4_with_rz() {
        let a = fp16_exact(3, 33, 3).map(|v| v * 1.000_123);
        let b = fp16_exact(33, 2, 4).map(|v| v * 0.999_87);
        let cfg = MmaConfig::default();
        let m4 = gemm(&a, &b, GemmScheme::Markidis4(FloatFormat::FP16), &cfg).unwrap();
        let c4 = gemm(&a, &b, "corrected4_rz".parse().unwrap(), &cfg).unwrap();
        assert_eq!(m4.output, c4.output);
    }

    #[test]
    fn scaled_split_rejected_for_shared_accumulator() {
        let a = Matrix::<f32>::identity(2);
        let scheme = GemmScheme::Corrected4 {
            split: SplitScheme::HALFHALF,
            terminal: NearestEven,
        };
        assert!(matches!(
            gemm(&a, &a, scheme, &MmaConfig::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let a = Matrix::<f32>::zeros(2, 3);
        assert!(matches!(
            gemm(&a, &a, GemmScheme::Fp32Simt, &MmaConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn zero_padding_is_inert() {
        let a = generate(&MatrixSpec::new(3, 21, Distribution::Urand { lo: -1.0, hi: 1.0 }, 9)).unwrap();
        let b = generate(&MatrixSpec::new(21, 2, Distribution::Urand { lo: -1.0, hi: 1.0 }, 10)).unwrap();
        let cfg = MmaConfig::default();
        for name in ["tc_plain_fp16", "markidis4", "corrected3_halfhalf", "corrected3_tf32"] {
            let scheme: GemmScheme = name.parse().unwrap();
            let run = gemm(&a, &b, scheme, &cfg).unwrap();
            let padded = gemm(&a.pad_cols(32), &b.pad_rows(32), scheme, &cfg).unwrap();
            assert_eq!(run.output, padded.output, "{name}");
        }
    }

    #[test]
    fn ablation_on_exact_splits_is_identical() {
        let a = fp16_exact(8, 32, 11);
        let b = fp16_exact(32, 8, 12);
        let r = delta_term_ablation(&a, &b, SplitScheme::HALFHALF, &MmaConfig::default()).unwrap();
        assert_eq!(r.three_term, r.four_term);
        assert_eq!(r.max_ulp_diff, 0);
    }

    #[test]
    fn ablation_single_element() {
        let v = f32::from_bits(0x3F80_1003);
        let a = Matrix::new(1, 1, vec![v]).unwrap();
        let r = delta_term_ablation(&a, &a, SplitScheme::HALFHALF, &MmaConfig::default()).unwrap();
        // The split itself is one ulp high, so the four-term square lands two
        // ulps above the three-term one, which happens to equal RN(v * v).
        let exact = (v as f64 * v as f64) as f32;
        assert_eq!(r.three_term.at(0, 0), exact);
        assert_eq!(r.four_term.at(0, 0).to_bits(), exact.to_bits() + 2);
        assert_eq!(r.max_ulp_diff, 2);
    }

    #[test]
    fn flags_report_out_of_range_inputs() {
        let a = Matrix::new(1, 2, vec![1.0f32, 2.0]).unwrap();
        let b = Matrix::new(2, 1, vec![1e-12f32, 1.0]).unwrap();
        let run = gemm(&a, &b, GemmScheme::Corrected3(SplitScheme::HALFHALF), &MmaConfig::default())
            .unwrap();
        assert!(run.flags.saw_out_of_range);
        assert_eq!(run.flags.to_string(), "out_of_range");
        let run = gemm(&a, &b, GemmScheme::Corrected3(SplitScheme::TF32TF32), &MmaConfig::default())
            .unwrap();
        assert!(!run.flags.saw_out_of_range);
    }
}
