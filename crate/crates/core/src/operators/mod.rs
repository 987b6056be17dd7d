//! Measurement operators linking the dense network output to observed data, plus the
//! procedural phantoms and sampling grids used by the tasks.

mod noise;
mod phantom;
mod radon;
mod sampling;

use std::sync::Arc;

pub use noise::poisson_photon_noise;
pub use phantom::{chirp_audio, shepp_logan, Phantom, Phantom3D, SHEPP_LOGAN_ELLIPSES};
pub use radon::{radon_adjoint, radon_project, RadonGeometry, RadonProjector, Sinogram};
pub use sampling::{box_downsample, box_upsample_adjoint, grid_coords, lowres_coords, occupancy_dataset, sample_coords};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Maps network output on the training coordinates to the space of observations.
#[derive(Debug, Clone)]
pub enum MeasurementOperator {
    /// Observations are the network values themselves.
    Identity,
    /// Box average over `factor × factor` blocks of an `hr_size²` grid.
    LowResSampler { factor: usize, hr_size: usize },
    /// Parallel-beam projection of an `N²` single-channel grid.
    Radon(Arc<RadonProjector>),
    /// Pointwise occupancy labels, trained on random mini-batches.
    OccupancyBatch { batch_size: usize },
    /// Pointwise waveform samples.
    AudioSampler,
}

impl MeasurementOperator {
    pub fn radon(size: usize, angles: usize, detectors: usize) -> Result<MeasurementOperator> {
        let geometry = RadonGeometry::new(size, angles, detectors)?;
        Ok(MeasurementOperator::Radon(Arc::new(RadonProjector::new(geometry))))
    }

    pub fn low_res(hr_size: usize, factor: usize) -> Result<MeasurementOperator> {
        if factor == 0 || hr_size % factor != 0 {
            return Err(Error::Domain(format!("factor {factor} does not divide {hr_size}")));
        }
        Ok(MeasurementOperator::LowResSampler { factor, hr_size })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasurementOperator::Identity => "identity",
            MeasurementOperator::LowResSampler { .. } => "lowres_sampler",
            MeasurementOperator::Radon(_) => "radon",
            MeasurementOperator::OccupancyBatch { .. } => "occupancy_batch",
            MeasurementOperator::AudioSampler => "audio_sampler",
        }
    }

    /// True when each observation depends only on the network value at the same row,
    /// which is what makes mini-batching valid.
    pub fn is_pointwise(&self) -> bool {
        matches!(
            self,
            MeasurementOperator::Identity
                | MeasurementOperator::OccupancyBatch { .. }
                | MeasurementOperator::AudioSampler
        )
    }

    pub fn is_linear(&self) -> bool {
        matches!(
            self,
            MeasurementOperator::Identity | MeasurementOperator::LowResSampler { .. } | MeasurementOperator::Radon(_)
        )
    }

    pub fn batch_size(&self) -> Option<usize> {
        match self {
            MeasurementOperator::OccupancyBatch { batch_size } => Some(*batch_size),
            _ => None,
        }
    }

    /// Shape of `apply(x)` for an `rows × cols` input.
    pub fn observation_shape(&self, rows: usize, cols: usize) -> Result<(usize, usize)> {
        match self {
            MeasurementOperator::LowResSampler { factor, hr_size } => {
                if rows != hr_size * hr_size {
                    return Err(Error::shape(self.name(), (rows, cols), (hr_size * hr_size, cols)));
                }
                let lr = hr_size / factor;
                Ok((lr * lr, cols))
            }
            MeasurementOperator::Radon(p) => {
                let g = p.geometry();
                if rows != g.size * g.size || cols != 1 {
                    return Err(Error::shape(self.name(), (rows, cols), (g.size * g.size, 1)));
                }
                Ok((g.angles, g.detectors))
            }
            _ => Ok((rows, cols)),
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let (rows, cols) = self.observation_shape(x.rows(), x.cols())?;
        match self {
            MeasurementOperator::LowResSampler { factor, hr_size } => box_downsample(x, *hr_size, *factor),
            MeasurementOperator::Radon(p) => Matrix::from_vec(rows, cols, p.project_flat(x.as_slice())?),
            _ => Ok(x.clone()),
        }
    }

    /// Adjoint applied to `y`, producing a matrix of `input_shape`.
    pub fn adjoint(&self, y: &Matrix, input_shape: (usize, usize)) -> Result<Matrix> {
        let expected = self.observation_shape(input_shape.0, input_shape.1)?;
        if y.shape() != expected {
            return Err(Error::shape(self.name(), y.shape(), expected));
        }
        match self {
            MeasurementOperator::LowResSampler { factor, hr_size } => box_upsample_adjoint(y, *hr_size, *factor),
            MeasurementOperator::Radon(p) => {
                Matrix::from_vec(input_shape.0, input_shape.1, p.adjoint_flat(y.as_slice())?)
            }
            _ => Ok(y.clone()),
        }
    }
}
