//! Orthonormal scaling filters.
//!
//! Least-asymmetric Daubechies taps, normalised so that `sum h = sqrt(2)`
//! and `sum h^2 = 1`, ordered as reconstruction low-pass filters.

#![allow(clippy::excessive_precision)]

pub(crate) const HAAR: [f64; 2] = [
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
];

pub(crate) const LA4: [f64; 8] = [
    3.2223100604051467872e-2,
    -1.2603967262031303754e-2,
    -9.9219543576633532585e-2,
    2.978577956053060514e-1,
    8.0373875180513208088e-1,
    4.9761866763277498998e-1,
    -2.9635527646002491764e-2,
    -7.5765714789502213228e-2,
];

pub(crate) const LA6: [f64; 12] = [
    -7.8007083250323804142e-3,
    1.767711864254007741e-3,
    4.4724901770781384663e-2,
    -2.1060292512370847992e-2,
    -7.2637522786376583464e-2,
    3.3792942172816583271e-1,
    7.8764114102865099607e-1,
    4.9105594192797373304e-1,
    -4.8311742585698054971e-2,
    -1.179901111485200254e-1,
    3.4907120842221625153e-3,
    1.5404109327044824299e-2,
];

pub(crate) const LA8: [f64; 16] = [
    1.8899503327676891843e-3,
    -3.0292051472413308126e-4,
    -1.4952258337062199118e-2,
    3.8087520138944894631e-3,
    4.9137179673730286787e-2,
    -2.7219029917103486322e-2,
    -5.1945838107881800736e-2,
    3.6444189483617893676e-1,
    7.7718575169962802862e-1,
    4.8135965125905339159e-1,
    -6.1273359067811077843e-2,
    -1.4329423835127266284e-1,
    7.6074873249766081919e-3,
    3.1695087811525991431e-2,
    -5.4213233180001068935e-4,
    -3.3824159510050025955e-3,
];

pub(crate) const LA10: [f64; 20] = [
    -4.5932942100465204019e-4,
    5.7036083618495006815e-5,
    4.5931735853117919475e-3,
    -8.0435893201645129606e-4,
    -2.0354939812311110745e-2,
    5.764912033581149672e-3,
    4.9994972077375156277e-2,
    -3.1990056882428113921e-2,
    -3.5536740473819585816e-2,
    3.8382676106707632626e-1,
    7.6951003702109793678e-1,
    4.7169066693844291e-1,
    -7.0880535783231572286e-2,
    -1.5949427888491060946e-1,
    1.1609893903711318064e-2,
    4.5927239231091508585e-2,
    -1.4653825813046105136e-3,
    -8.641299277022150261e-3,
    9.5632670722852730785e-5,
    7.7015980911445982258e-4,
];

/// Quadrature-mirror high-pass partner `g[t] = (-1)^t h[L-1-t]`.
pub(crate) fn high_pass(h: &[f64]) -> Vec<f64> {
    let l = h.len();
    (0..l)
        .map(|t| if t % 2 == 0 { h[l - 1 - t] } else { -h[l - 1 - t] })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_filters() -> Vec<&'static [f64]> {
        vec![&HAAR[..], &LA4[..], &LA6[..], &LA8[..], &LA10[..]]
    }

    #[test]
    fn taps_are_orthonormal() {
        for h in all_filters() {
            let sum: f64 = h.iter().sum();
            assert!((sum - std::f64::consts::SQRT_2).abs() < 1e-12);
            let l = h.len();
            for shift in (0..l).step_by(2) {
                let dot: f64 = (0..l - shift).map(|t| h[t] * h[t + shift]).sum();
                let want = if shift == 0 { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12, "len {l} shift {shift}: {dot}");
            }
        }
    }

    #[test]
    fn high_pass_has_vanishing_moments() {
        for (h, vm) in [(&LA4[..], 4), (&LA6[..], 6), (&LA8[..], 8), (&LA10[..], 10)] {
            let g = high_pass(h);
            for p in 0..vm {
                let m: f64 = g
                    .iter()
                    .enumerate()
                    .map(|(t, v)| v * (t as f64 / g.len() as f64).powi(p))
                    .sum();
                assert!(m.abs() < 1e-13, "vm {vm} moment {p}: {m}");
            }
        }
    }
}
