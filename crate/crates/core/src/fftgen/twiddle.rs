//! Twiddle-factor classification and the strength-reduced operation budget of a kernel.

use serde::Serialize;
use thiserror::Error;

use crate::oracle::Complex;

/// Component tolerance used when classifying a twiddle.
pub const CLASSIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TwiddleClass {
    Unity,
    Negate,
    PosJ,
    NegJ,
    /// `|re| == |im|`, e.g. `0.7071 - 0.7071j`.
    EqualMag,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("twiddle ({0}, {1}) does not have unit magnitude")]
pub struct NotUnitMagnitude(pub f64, pub f64);

pub fn classify_twiddle(w: Complex) -> Result<TwiddleClass, NotUnitMagnitude> {
    let (re, im) = w;
    if ((re * re + im * im).sqrt() - 1.0).abs() > CLASSIFY_TOL {
        return Err(NotUnitMagnitude(re, im));
    }
    let near = |a: f64, b: f64| (a - b).abs() <= CLASSIFY_TOL;
    Ok(if near(re, 1.0) && near(im, 0.0) {
        TwiddleClass::Unity
    } else if near(re, -1.0) && near(im, 0.0) {
        TwiddleClass::Negate
    } else if near(re, 0.0) && near(im, 1.0) {
        TwiddleClass::PosJ
    } else if near(re, 0.0) && near(im, -1.0) {
        TwiddleClass::NegJ
    } else if near(re.abs(), im.abs()) {
        TwiddleClass::EqualMag
    } else {
        TwiddleClass::General
    })
}

/// `exp(-2πi·k/n)` with the angle reduced modulo `n` first.
pub fn twiddle(k: usize, n: usize) -> Complex {
    let angle = -2.0 * std::f64::consts::PI * (k % n) as f64 / n as f64;
    let (s, c) = angle.sin_cos();
    (c, s)
}

/// One rotation applied inside a radix-`r` kernel built from radix-2 stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageTwiddle {
    /// Butterfly span of the stage (r, r/2, ..., 2).
    pub span: usize,
    /// Exponent `i` of `W_span^i`.
    pub exponent: usize,
    pub value: Complex,
    pub class: TwiddleClass,
}

/// Every difference-path rotation of a decimation-in-frequency radix-2 kernel, stage by
/// stage, including the trivial rotations of the final span-2 stage.
pub fn kernel_twiddles(radix: usize) -> Vec<StageTwiddle> {
    let mut out = Vec::new();
    let mut span = radix;
    while span >= 2 {
        let half = span / 2;
        for _block in 0..radix / span {
            for i in 0..half {
                let value = twiddle(i, span);
                out.push(StageTwiddle {
                    span,
                    exponent: i,
                    value,
                    class: classify_twiddle(value).expect("roots of unity have unit magnitude"),
                });
            }
        }
        span /= 2;
    }
    out
}

/// Operation budget of a kernel after strength reduction, excluding the span-2 stage.
///
/// A general rotation is a full complex multiply (6 flops); an equal-magnitude rotation
/// needs 2 real multiplies; every other rotation is a single move or sign operation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StrengthBudget {
    pub general: usize,
    pub equal_mag: usize,
    pub trivial: usize,
    pub flops: usize,
    pub real_mults: usize,
    pub other: usize,
}

pub fn strength_budget(radix: usize) -> StrengthBudget {
    let mut b = StrengthBudget::default();
    for tw in kernel_twiddles(radix).iter().filter(|t| t.span > 2) {
        match tw.class {
            TwiddleClass::General => {
                b.general += 1;
                b.flops += 6;
            }
            TwiddleClass::EqualMag => {
                b.equal_mag += 1;
                b.real_mults += 2;
            }
            _ => {
                b.trivial += 1;
                b.other += 1;
            }
        }
    }
    b
}
