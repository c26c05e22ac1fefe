//! Fifth-order WENO reconstruction with Jiang–Shu smoothness indicators.

pub const EPSILON: f64 = 1e-6;
const LINEAR_WEIGHTS: [f64; 3] = [0.1, 0.6, 0.3];

/// Left-biased value at the face between `c` and `d` from the five-point
/// stencil `(a, b, c, d, e) = (u[i-2], …, u[i+2])`. Mirror the arguments for
/// the right-biased value.
#[inline(always)]
pub fn reconstruct(a: f64, b: f64, c: f64, d: f64, e: f64) -> f64 {
    let q0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0;
    let q1 = (-b + 5.0 * c + 2.0 * d) / 6.0;
    let q2 = (2.0 * c + 5.0 * d - e) / 6.0;

    let t0 = a - 2.0 * b + c;
    let s0 = a - 4.0 * b + 3.0 * c;
    let t1 = b - 2.0 * c + d;
    let s1 = b - d;
    let t2 = c - 2.0 * d + e;
    let s2 = 3.0 * c - 4.0 * d + e;
    let b0 = 13.0 / 12.0 * t0 * t0 + 0.25 * s0 * s0;
    let b1 = 13.0 / 12.0 * t1 * t1 + 0.25 * s1 * s1;
    let b2 = 13.0 / 12.0 * t2 * t2 + 0.25 * s2 * s2;

    let a0 = LINEAR_WEIGHTS[0] / ((EPSILON + b0) * (EPSILON + b0));
    let a1 = LINEAR_WEIGHTS[1] / ((EPSILON + b1) * (EPSILON + b1));
    let a2 = LINEAR_WEIGHTS[2] / ((EPSILON + b2) * (EPSILON + b2));
    (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)
}

/// Same stencil with the nonlinear weights frozen at the linear weights.
#[inline]
pub fn reconstruct_linear(a: f64, b: f64, c: f64, d: f64, e: f64) -> f64 {
    (2.0 * a - 13.0 * b + 47.0 * c + 27.0 * d - 3.0 * e) / 60.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_constants_and_reproduces_linear_limit() {
        assert!((reconstruct(2.0, 2.0, 2.0, 2.0, 2.0) - 2.0).abs() < 1e-14);
        // indicators far below epsilon leave the weights at their linear values
        let u: Vec<f64> = (0..5).map(|i| 1e-4 * (0.1 * i as f64).exp()).collect();
        let w = reconstruct(u[0], u[1], u[2], u[3], u[4]);
        let l = reconstruct_linear(u[0], u[1], u[2], u[3], u[4]);
        assert!((w - l).abs() < 1e-12, "{w} {l}");
    }

    #[test]
    fn picks_the_smooth_side_of_a_jump() {
        // step between c and d: the value should stay near the left state
        let v = reconstruct(1.0, 1.0, 1.0, 0.0, 0.0);
        assert!((v - 1.0).abs() < 1e-2, "{v}");
    }
}
