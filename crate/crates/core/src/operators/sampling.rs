//! Pixel-centre coordinate grids and grid resampling.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::operators::Phantom3D;

/// Centres of `n` equal cells of `[-1, 1]`.
pub fn sample_coords(n: usize) -> Vec<f64> {
    (0..n).map(|i| -1.0 + (2 * i + 1) as f64 / n as f64).collect()
}

/// Cell-centre coordinates of a row-major grid with the given extents, one row per cell.
/// Column `k` holds the coordinate along axis `k`, so a `[rows, cols]` image yields
/// `(row, col)` pairs with the last axis varying fastest.
pub fn grid_coords(dims: &[usize]) -> Matrix {
    let axes: Vec<Vec<f64>> = dims.iter().map(|&n| sample_coords(n)).collect();
    let count: usize = dims.iter().product();
    let d = dims.len();
    let mut data = Vec::with_capacity(count * d);
    let mut index = vec![0usize; d];
    for _ in 0..count {
        for (k, &i) in index.iter().enumerate() {
            data.push(axes[k][i]);
        }
        for k in (0..d).rev() {
            index[k] += 1;
            if index[k] < dims[k] {
                break;
            }
            index[k] = 0;
        }
    }
    Matrix::from_vec(count, d, data).expect("grid size is consistent")
}

/// Centres of the low-resolution pixels of an `hr_size²` image downsampled by `factor`,
/// in the high-resolution image's `[-1, 1]²` frame.
pub fn lowres_coords(hr_size: usize, factor: usize) -> Result<Matrix> {
    if factor == 0 || hr_size % factor != 0 {
        return Err(Error::Domain(format!("factor {factor} does not divide {hr_size}")));
    }
    let lr = hr_size / factor;
    Ok(grid_coords(&[lr, lr]))
}

/// Mean over `factor × factor` blocks. `x` holds `hr_size²` rows in row-major pixel order.
pub fn box_downsample(x: &Matrix, hr_size: usize, factor: usize) -> Result<Matrix> {
    if factor == 0 || hr_size % factor != 0 || x.rows() != hr_size * hr_size {
        return Err(Error::shape("box_downsample", x.shape(), (hr_size * hr_size, x.cols())));
    }
    let lr = hr_size / factor;
    let ch = x.cols();
    let scale = 1.0 / (factor * factor) as f64;
    let mut out = Matrix::zeros(lr * lr, ch);
    for r in 0..hr_size {
        for c in 0..hr_size {
            let dst = (r / factor) * lr + c / factor;
            for k in 0..ch {
                out[(dst, k)] += x[(r * hr_size + c, k)] * scale;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`box_downsample`]: each low-resolution value spread over its block.
pub fn box_upsample_adjoint(y: &Matrix, hr_size: usize, factor: usize) -> Result<Matrix> {
    let lr = if factor == 0 { 0 } else { hr_size / factor };
    if factor == 0 || hr_size % factor != 0 || y.rows() != lr * lr {
        return Err(Error::shape("box_upsample_adjoint", y.shape(), (lr * lr, y.cols())));
    }
    let scale = 1.0 / (factor * factor) as f64;
    Ok(Matrix::from_fn(hr_size * hr_size, y.cols(), |i, k| {
        let (r, c) = (i / hr_size, i % hr_size);
        y[((r / factor) * lr + c / factor, k)] * scale
    }))
}

/// Voxel-centre coordinates and labels: 1 outside the shape, 0 inside.
pub fn occupancy_dataset(phantom: &Phantom3D) -> (Matrix, Matrix) {
    let coords = grid_coords(&phantom.dims);
    let labels = phantom
        .values
        .iter()
        .map(|&v| if v >= 0.5 { 0.0 } else { 1.0 })
        .collect();
    (coords, Matrix::column(labels))
}
