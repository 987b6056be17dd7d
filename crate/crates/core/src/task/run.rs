use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::predict;
use crate::error::{Error, Result};
use crate::io::{self, AudioBuffer, ImageBuffer, VolumeBuffer};
use crate::matrix::Matrix;
use crate::metrics::{self, config_hash, MetricReport};
use crate::network::Network;
use crate::operators::{
    box_downsample, grid_coords, lowres_coords, occupancy_dataset, poisson_photon_noise, sample_coords,
    MeasurementOperator, Phantom, Phantom3D, RadonGeometry, Sinogram,
};
use crate::training::{train_with, TrainHistory, TrainOptions};

use super::config::{PhantomKind, TaskConfig, TaskKind};

/// Ground truth a reconstruction is scored against.
#[derive(Debug, Clone)]
enum Truth {
    Image(ImageBuffer),
    Volume(Phantom3D),
    Audio(AudioBuffer),
}

/// Training data, operator and evaluation grid of one configured task.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub coords: Matrix,
    pub observations: Matrix,
    pub operator: MeasurementOperator,
    pub eval_coords: Matrix,
    pub input_dim: usize,
    pub output_dim: usize,
    truth: Truth,
    /// Rows of the evaluation grid holding the reference signal.
    reference: Matrix,
    /// Degraded input kept for reporting (noisy image, low-resolution image, sinogram).
    degraded: Option<Degraded>,
}

#[derive(Debug, Clone)]
enum Degraded {
    Image(ImageBuffer),
    Sinogram(Sinogram),
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: TaskConfig,
    pub network: Network,
    pub history: TrainHistory,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TaskConfig,
    #[serde(with = "crate::metrics::float_map")]
    pub metrics: BTreeMap<String, f64>,
    pub history_path: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub wall_time_secs: f64,
}

fn load_image(cfg: &TaskConfig) -> Result<ImageBuffer> {
    if let Some(path) = &cfg.data.input {
        return io::read_image(path);
    }
    let n = cfg.data.size;
    let phantom = match cfg.data.phantom {
        PhantomKind::SheppLogan => Phantom::SheppLogan2D { n },
        PhantomKind::Checker => Phantom::Checker2D {
            n,
            cells: cfg.data.checker_cells,
        },
        other => return Err(Error::Config(format!("{other:?} is not an image phantom"))),
    };
    Ok(ImageBuffer::from_gray(&phantom.render_2d()?))
}

fn load_volume(cfg: &TaskConfig) -> Result<Phantom3D> {
    if let Some(path) = &cfg.data.input {
        let v = io::read_volume(path)?;
        return Ok(Phantom3D {
            dims: [v.nz, v.ny, v.nx],
            values: v.data,
        });
    }
    match cfg.data.phantom {
        PhantomKind::Sphere => Phantom::Sphere3D {
            n: cfg.data.size,
            radius: cfg.data.sphere_radius,
        }
        .render_3d(),
        other => Err(Error::Config(format!("{other:?} is not a volume phantom"))),
    }
}

fn load_audio(cfg: &TaskConfig) -> Result<AudioBuffer> {
    if let Some(path) = &cfg.data.input {
        return io::read_wav(path);
    }
    match cfg.data.phantom {
        PhantomKind::Chirp => {
            let samples = cfg.data.audio_samples;
            Ok(AudioBuffer {
                sample_rate: samples as u32,
                samples: Phantom::Chirp1D {
                    samples,
                    f0: cfg.data.chirp_f0,
                    f1: cfg.data.chirp_f1,
                }
                .render_1d()?,
            })
        }
        other => Err(Error::Config(format!("{other:?} is not an audio phantom"))),
    }
}

fn square_gray(img: &ImageBuffer, task: &str) -> Result<Matrix> {
    if img.channels != 1 || img.width != img.height {
        return Err(Error::Config(format!(
            "{task} needs a square greyscale image, got {}x{}x{}",
            img.width, img.height, img.channels
        )));
    }
    img.to_gray()
}

/// Builds observations, operator and evaluation grid for `cfg`.
pub fn prepare(cfg: &TaskConfig) -> Result<Prepared> {
    match cfg.task {
        TaskKind::Fit | TaskKind::Denoise => {
            let img = load_image(cfg)?;
            let coords = grid_coords(&[img.height, img.width]);
            let reference = img.to_pixels();
            let (observations, degraded) = if cfg.task == TaskKind::Denoise {
                let noisy = poisson_photon_noise(&reference, cfg.noise.photons, cfg.noise.integration_time, cfg.seed)?;
                let buffer = ImageBuffer::new(img.width, img.height, img.channels, noisy.as_slice().to_vec())?;
                (noisy, Some(Degraded::Image(buffer)))
            } else {
                (reference.clone(), None)
            };
            Ok(Prepared {
                eval_coords: coords.clone(),
                coords,
                observations,
                operator: MeasurementOperator::Identity,
                input_dim: 2,
                output_dim: img.channels,
                reference,
                truth: Truth::Image(img),
                degraded,
            })
        }
        TaskKind::Sr => {
            let img = load_image(cfg)?;
            if img.width != img.height {
                return Err(Error::Config("sr needs a square image".into()));
            }
            let n = img.width;
            let factor = cfg.sr.factor;
            let reference = img.to_pixels();
            let low = box_downsample(&reference, n, factor)?;
            let lr = n / factor;
            let degraded = ImageBuffer::new(lr, lr, img.channels, low.as_slice().to_vec())?;
            Ok(Prepared {
                coords: lowres_coords(n, factor)?,
                observations: low,
                operator: MeasurementOperator::Identity,
                eval_coords: grid_coords(&[n, n]),
                input_dim: 2,
                output_dim: img.channels,
                reference,
                truth: Truth::Image(img),
                degraded: Some(Degraded::Image(degraded)),
            })
        }
        TaskKind::Ct => {
            let img = load_image(cfg)?;
            let gray = square_gray(&img, "ct")?;
            let n = gray.rows();
            let detectors = cfg.ct.detectors.unwrap_or_else(|| RadonGeometry::default_detectors(n));
            let operator = MeasurementOperator::radon(n, cfg.ct.projections, detectors)?;
            let reference = img.to_pixels();
            let observations = operator.apply(&reference)?;
            let coords = grid_coords(&[n, n]);
            Ok(Prepared {
                eval_coords: coords.clone(),
                coords,
                degraded: Some(Degraded::Sinogram(Sinogram::new(observations.clone()))),
                observations,
                operator,
                input_dim: 2,
                output_dim: 1,
                reference,
                truth: Truth::Image(img),
            })
        }
        TaskKind::Occupancy => {
            let vol = load_volume(cfg)?;
            let (coords, labels) = occupancy_dataset(&vol);
            Ok(Prepared {
                eval_coords: coords.clone(),
                coords,
                observations: labels.clone(),
                operator: MeasurementOperator::OccupancyBatch {
                    batch_size: cfg.occupancy.batch_size,
                },
                input_dim: 3,
                output_dim: 1,
                reference: labels,
                truth: Truth::Volume(vol),
                degraded: None,
            })
        }
        TaskKind::Audio => {
            let audio = load_audio(cfg)?;
            let coords = Matrix::column(sample_coords(audio.samples.len()));
            let reference = Matrix::column(audio.samples.clone());
            Ok(Prepared {
                eval_coords: coords.clone(),
                coords,
                observations: reference.clone(),
                operator: MeasurementOperator::AudioSampler,
                input_dim: 1,
                output_dim: 1,
                reference,
                truth: Truth::Audio(audio),
                degraded: None,
            })
        }
    }
}

impl Prepared {
    /// Quality metrics of `net` on the evaluation grid.
    pub fn evaluate(&self, cfg: &TaskConfig, net: &Network) -> Result<BTreeMap<String, f64>> {
        let pred = predict(net, &self.eval_coords)?;
        self.score(cfg, &pred)
    }

    fn score(&self, cfg: &TaskConfig, pred: &Matrix) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        match &self.truth {
            Truth::Image(img) => {
                let clamped = pred.map(|v| v.clamp(0.0, 1.0));
                out.insert("psnr".into(), metrics::psnr(&clamped, &self.reference, 1.0)?);
                if img.channels == 1 && img.width >= 11 && img.height >= 11 {
                    let a = clamped.reshape(img.height, img.width)?;
                    let b = self.reference.clone().reshape(img.height, img.width)?;
                    out.insert("ssim".into(), metrics::ssim(&a, &b, 1.0)?);
                }
                if let Some(Degraded::Image(noisy)) = &self.degraded {
                    if cfg.task == TaskKind::Denoise {
                        out.insert("psnr_noisy".into(), metrics::psnr(&noisy.to_pixels(), &self.reference, 1.0)?);
                    }
                }
            }
            Truth::Volume(_) => {
                out.insert("iou".into(), metrics::iou(pred, &self.reference, cfg.occupancy.threshold)?);
            }
            Truth::Audio(_) => {
                out.insert("mse".into(), metrics::mse(pred, &self.reference)?);
            }
        }
        Ok(out)
    }
}

/// Trains and scores without touching the file system.
pub fn run_in_memory(cfg: &TaskConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    let net = Network::build(cfg.network_spec(data.input_dim, data.output_dim))?;
    let opts = TrainOptions {
        iterations: cfg.iterations,
        base_lr: cfg.lr,
        schedule: cfg.schedule,
        batch_size: data.operator.batch_size(),
        checkpoint_every: cfg.checkpoint_every,
        seed: cfg.seed,
        ..TrainOptions::default()
    };
    let mut eval = |n: &Network| data.evaluate(cfg, n);
    let result = train_with(net, &data.operator, &data.observations, &data.coords, &opts, Some(&mut eval));
    let (network, history) = result.map_err(|e| match e {
        Error::Divergence { iteration, .. } => Error::Divergence {
            iteration,
            method: Some(cfg.method_label()),
        },
        other => other,
    })?;
    let metrics = match history.checkpoints.last() {
        Some(c) => c.metrics.clone(),
        None => data.evaluate(cfg, &network)?,
    };
    Ok(RunOutcome {
        config: cfg.clone(),
        network,
        history,
        metrics,
    })
}

fn metric_rows(cfg: &TaskConfig, metrics: &BTreeMap<String, f64>) -> Result<Vec<MetricReport>> {
    let hash = config_hash(&serde_json::to_string(cfg)?);
    Ok(metrics
        .iter()
        .map(|(name, &value)| MetricReport {
            task: cfg.task.name().into(),
            method: cfg.method_label(),
            metric: name.clone(),
            value,
            config_hash: hash.clone(),
        })
        .collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trains, then writes the resolved config, loss curve, metrics, reconstruction and
/// weights into `out`.
pub fn run_task(cfg: &TaskConfig, out: &Path) -> Result<RunReport> {
    let started = Instant::now();
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let config_path = out.join("config.json");
    write_text(&config_path, &serde_json::to_string_pretty(cfg)?)?;
    let metrics_path = out.join("metrics.jsonl");

    let outcome = match run_in_memory(cfg) {
        Ok(o) => o,
        Err(e @ Error::Divergence { .. }) => {
            let (name, _) = cfg.task.primary_metric();
            let nan = BTreeMap::from([(name.to_string(), f64::NAN)]);
            io::append_json_line(&metrics_path, &metric_rows(cfg, &nan)?)?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };

    let history_path = out.join("history.jsonl");
    write_text(&history_path, &outcome.history.to_json_lines()?)?;
    let loss_path = out.join("loss.txt");
    write_text(&loss_path, &outcome.history.to_loss_table())?;
    io::append_json_line(&metrics_path, &metric_rows(cfg, &outcome.metrics)?)?;
    let weights_path = out.join("weights.inrw");
    io::write_weights(&outcome.network, &weights_path)?;

    let mut artifacts = vec![config_path, loss_path, metrics_path, weights_path];
    let data = prepare(cfg)?;
    let pred = predict(&outcome.network, &data.eval_coords)?;
    match &data.truth {
        Truth::Image(img) => {
            let recon = ImageBuffer::new(img.width, img.height, img.channels, pred.into_vec())?.with_maxval(65535);
            let p = out.join(if img.channels == 1 { "recon.pgm" } else { "recon.ppm" });
            io::write_image(&recon, &p)?;
            artifacts.push(p);
        }
        Truth::Volume(vol) => {
            let [nz, ny, nx] = vol.dims;
            let p = out.join("recon.vol");
            io::write_volume(&VolumeBuffer { nx, ny, nz, data: pred.into_vec() }, &p)?;
            artifacts.push(p);
        }
        Truth::Audio(audio) => {
            let p = out.join("recon.wav");
            io::write_wav(
                &AudioBuffer {
                    sample_rate: audio.sample_rate,
                    samples: pred.into_vec(),
                },
                &p,
            )?;
            artifacts.push(p);
        }
    }
    match &data.degraded {
        Some(Degraded::Image(img)) => {
            let name = if cfg.task == TaskKind::Sr { "lowres" } else { "noisy" };
            let p = out.join(format!("{name}.{}", if img.channels == 1 { "pgm" } else { "ppm" }));
            io::write_image(&img.clone().with_maxval(65535), &p)?;
            artifacts.push(p);
        }
        Some(Degraded::Sinogram(s)) => {
            let p = out.join("sinogram.sino");
            io::write_sinogram(s, &p)?;
            artifacts.push(p);
        }
        None => {}
    }

    let report = RunReport {
        config: cfg.clone(),
        metrics: outcome.metrics,
        history_path,
        artifacts,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let report_path = out.join("report.json");
    write_text(&report_path, &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
