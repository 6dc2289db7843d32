/// Half-width of the truncated Gaussian kernel: `ceil(3 * sigma)`.
pub fn kernel_radius(sigma: f64) -> usize {
    if sigma <= 0.0 {
        0
    } else {
        (3.0 * sigma).ceil() as usize
    }
}

/// Unnormalized weights `exp(-d^2 / 2 sigma^2)` for `d = -r..=r`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = kernel_radius(sigma) as isize;
    if r == 0 {
        return vec![1.0];
    }
    (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Smoothed value at `i` using only `series` (the kernel is truncated at both
/// ends of the slice and renormalized over the weights that remain).
pub fn smooth_at(series: &[f64], i: usize, kernel: &[f64]) -> f64 {
    let r = kernel.len() / 2;
    if r == 0 {
        return series[i];
    }
    let lo = i.saturating_sub(r);
    let hi = (i + r).min(series.len() - 1);
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &x) in series.iter().enumerate().take(hi + 1).skip(lo) {
        let wgt = kernel[j + r - i];
        num += wgt * x;
        den += wgt;
    }
    num / den
}

/// Temporal Gaussian smoothing of per-frame scores, clamped to `[0, 1]`.
/// `sigma = 0` returns the input unchanged.
pub fn smooth(series: &[f64], sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    (0..series.len())
        .map(|i| smooth_at(series, i, &kernel).clamp(0.0, 1.0))
        .collect()
}

/// Separable Gaussian blur of a row-major `width x height` grid with the same
/// truncated, renormalized kernel along each axis.
pub fn blur_2d(grid: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return grid.to_vec();
    }
    let mut tmp = vec![0.0; grid.len()];
    for y in 0..height {
        let row = &grid[y * width..(y + 1) * width];
        for x in 0..width {
            tmp[y * width + x] = smooth_at(row, x, &kernel);
        }
    }
    let mut out = vec![0.0; grid.len()];
    let mut col = vec![0.0; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = tmp[y * width + x];
        }
        for y in 0..height {
            out[y * width + x] = smooth_at(&col, y, &kernel);
        }
    }
    out
}
