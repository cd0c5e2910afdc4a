//! Zeroth/first order Bessel functions of the first kind and the abscissa
//! constant used by the speed estimator.

/// First local maximum of `d/dx J0(x) = -J1(x)`, i.e. the second zero of
/// `J1'`. The speed estimator peaks the ACF differential, which for a
/// `J0(k v tau)` curve lands here. [`calibrate_x0`] re-derives it.
pub const BESSEL_X0: f64 = 5.331_442_773_525_032;

/// `J0(x)`, accurate to better than 1e-12 for `|x| <= 50`.
pub fn bessel_j0(x: f64) -> f64 {
    bessel_j01(x).0
}

/// `J1(x)`, same accuracy as [`bessel_j0`].
pub fn bessel_j1(x: f64) -> f64 {
    bessel_j01(x).1
}

/// Both orders at once by Miller's backward recurrence normalised with
/// `J0 + 2 (J2 + J4 + ...) = 1`.
pub fn bessel_j01(x: f64) -> (f64, f64) {
    let ax = x.abs();
    if ax < 1e-8 {
        return (1.0 - 0.25 * x * x, 0.5 * x);
    }
    let mut start = (ax + 30.0 + 12.0 * ax.sqrt()) as usize;
    start += start % 2;
    let two_over_x = 2.0 / ax;
    let mut above = 0.0f64; // J_{n+1}
    let mut current = 1e-30f64; // J_n
    let mut sum = 0.0f64;
    let mut j1 = 0.0f64;
    for n in (1..=start).rev() {
        let below = n as f64 * two_over_x * current - above;
        above = current;
        current = below;
        // `current` is now J_{n-1}
        if (n - 1) % 2 == 0 && n - 1 > 0 {
            sum += current;
        }
        if n - 1 == 1 {
            j1 = current;
        }
        if current.abs() > 1e200 {
            current *= 1e-200;
            above *= 1e-200;
            sum *= 1e-200;
            j1 *= 1e-200;
        }
    }
    let norm = current + 2.0 * sum;
    let j0 = current / norm;
    let j1 = j1 / norm;
    (j0, if x < 0.0 { -j1 } else { j1 })
}

/// Locates the first local maximum of `d/dx J0` by a brute-force grid scan
/// followed by golden-section refinement.
pub fn calibrate_x0() -> f64 {
    let slope = |x: f64| -bessel_j1(x);
    let step = 1e-3;
    let mut x = step;
    while !(slope(x) > slope(x - step) && slope(x) >= slope(x + step)) {
        x += step;
        assert!(x < 20.0, "no maximum of dJ0/dx below 20");
    }
    golden_max(slope, x - step, x + step, 1e-14)
}

pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol * (1.0 + lo.abs()) {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}
