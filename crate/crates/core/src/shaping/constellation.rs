//! Base constellations for candidate sets and baselines.

use crate::{CVector, C64};

/// Unit-average-energy constellation with `2^bits` points.
///
/// 0 bits is the single symbol `1`, 1 bit is BPSK, even bit counts are square
/// QAM, 3 bits is a 4x2 rectangle and odd counts from 5 up are cross QAM.
pub fn qam(bits: u32) -> Vec<C64> {
    let pts: Vec<C64> = match bits {
        0 => vec![C64::new(1.0, 0.0)],
        1 => vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
        3 => grid(4, 2),
        b if b % 2 == 0 => {
            let side = 1usize << (b / 2);
            grid(side, side)
        }
        b => {
            let j = (b - 1) / 2;
            let side = 3usize << (j - 1);
            let corner = 1usize << (j - 2);
            grid(side, side)
                .into_iter()
                .filter(|p| {
                    let edge = (side - 2 * corner) as f64;
                    !(p.re.abs() > edge && p.im.abs() > edge)
                })
                .collect()
        }
    };
    normalize(pts)
}

/// Points `(2i - (a-1)) + j(2q - (b-1))`, in-phase index major.
fn grid(a: usize, b: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(a * b);
    for i in 0..a {
        for q in 0..b {
            out.push(C64::new(
                2.0 * i as f64 - (a as f64 - 1.0),
                2.0 * q as f64 - (b as f64 - 1.0),
            ));
        }
    }
    out
}

fn normalize(pts: Vec<C64>) -> Vec<C64> {
    let e = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
    let s = 1.0 / e.sqrt();
    pts.into_iter().map(|p| p * s).collect()
}

/// Bits per stream: `bits` split over `streams`, extra bits go to the first streams.
pub fn stream_bits(bits: u32, streams: usize) -> Vec<u32> {
    let base = bits / streams as u32;
    let extra = (bits % streams as u32) as usize;
    (0..streams).map(|s| base + u32::from(s < extra)).collect()
}

/// `2^bits` symbol vectors of length `streams`, lexicographic over the
/// per-stream constellations, scaled to unit average vector energy.
pub fn product_constellation(bits: u32, streams: usize) -> Vec<CVector> {
    let per: Vec<Vec<C64>> = stream_bits(bits, streams).into_iter().map(qam).collect();
    let mut out: Vec<Vec<C64>> = vec![Vec::new()];
    for stream in &per {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                stream.iter().map(move |&p| {
                    let mut v = prefix.clone();
                    v.push(p);
                    v
                })
            })
            .collect();
    }
    let e = out
        .iter()
        .map(|v| v.iter().map(|c| c.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        / out.len() as f64;
    let s = 1.0 / e.sqrt();
    out.into_iter()
        .map(|v| CVector::from_iterator(streams, v.into_iter().map(|c| c * s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_gap(p: &[C64]) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                m = m.min((p[i] - p[j]).norm());
            }
        }
        m
    }

    #[test]
    fn sizes_and_energy() {
        for b in 0..=8 {
            let c = qam(b);
            assert_eq!(c.len(), 1 << b);
            let e = c.iter().map(|p| p.norm_sqr()).sum::<f64>() / c.len() as f64;
            assert!((e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn known_spacings() {
        // 16-QAM average energy 10 in integer units, 32-cross 20
        assert!((min_gap(&qam(4)) - 2.0 / 10f64.sqrt()).abs() < 1e-12);
        assert!((min_gap(&qam(5)) - 2.0 / 20f64.sqrt()).abs() < 1e-12);
        assert!((min_gap(&qam(2)) - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn stream_split() {
        assert_eq!(stream_bits(3, 2), vec![2, 1]);
        assert_eq!(stream_bits(1, 2), vec![1, 0]);
        assert_eq!(stream_bits(0, 2), vec![0, 0]);
        let p = product_constellation(3, 2);
        assert_eq!(p.len(), 8);
        let e = p.iter().map(|v| v.norm_squared()).sum::<f64>() / 8.0;
        assert!((e - 1.0).abs() < 1e-12);
        let single = product_constellation(0, 2);
        assert_eq!(single.len(), 1);
        assert!((single[0].norm() - 1.0).abs() < 1e-15);
    }
}
