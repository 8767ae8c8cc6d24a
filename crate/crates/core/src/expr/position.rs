//! Dual-indexed sinusoidal position encoding of `(depth, horizontal)`.

/// Encodes a node position into `2 * half_width` values. The first half
/// carries the depth with base 10000, the second half the horizontal
/// coordinate with base 10. Pairs alternate `sin, cos` at a shared frequency
/// `x / base^(4i / half_width)`.
///
/// An odd `half_width` ends each half on a lone `sin` entry.
pub fn dpe_encode(depth: f64, horizontal: f64, half_width: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * half_width];
    dpe_encode_into(depth, horizontal, half_width, &mut out);
    out
}

pub fn dpe_encode_into(depth: f64, horizontal: f64, half_width: usize, out: &mut [f64]) {
    assert!(half_width >= 1, "encoding width must be positive");
    assert_eq!(out.len(), 2 * half_width);
    let d = half_width as f64;
    let (depth_part, horizontal_part) = out.split_at_mut(half_width);
    fill(depth_part, depth, 10000.0, d);
    fill(horizontal_part, horizontal, 10.0, d);
}

fn fill(out: &mut [f64], value: f64, base: f64, d: f64) {
    for (e, slot) in out.iter_mut().enumerate() {
        let i = (e / 2) as f64;
        let angle = value / base.powf(4.0 * i / d);
        *slot = if e % 2 == 0 { angle.sin() } else { angle.cos() };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_width_values() {
        let v = dpe_encode(1.0, 0.5, 2);
        let expected = [1f64.sin(), 1f64.cos(), 0.5f64.sin(), 0.5f64.cos()];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((v[0] - 0.8415).abs() < 1e-4);
        assert!((v[1] - 0.5403).abs() < 1e-4);
        assert!((v[2] - 0.4794).abs() < 1e-4);
        assert!((v[3] - 0.8776).abs() < 1e-4);
    }

    #[test]
    fn zero_position() {
        assert_eq!(dpe_encode(0.0, 0.0, 2), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn pairs_on_unit_circle() {
        for depth in 1..40 {
            for k in 1..50 {
                let h = k as f64 / 50.0;
                for width in [2usize, 4, 6, 8] {
                    let v = dpe_encode(depth as f64, h, width);
                    for pair in v.chunks(2) {
                        assert!((pair[0] * pair[0] + pair[1] * pair[1] - 1.0).abs() < 1e-12);
                    }
                    assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
                }
            }
        }
    }

    #[test]
    fn odd_width_truncates_last_pair() {
        let v = dpe_encode(3.0, 0.25, 5);
        assert_eq!(v.len(), 10);
        let base = 10000f64.powf(4.0 * 2.0 / 5.0);
        assert!((v[4] - (3.0 / base).sin()).abs() < 1e-15);
        assert!((v[5] - 0.25f64.sin()).abs() < 1e-15);
    }
}
