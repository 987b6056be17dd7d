//! Task configuration: per-task defaults, JSON merging and `key=value` overrides.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::activation::ActivationKind;
use crate::encoding::EncodingSpec;
use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::training::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Fit,
    Denoise,
    Sr,
    Ct,
    Occupancy,
    Audio,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Fit,
        TaskKind::Denoise,
        TaskKind::Sr,
        TaskKind::Ct,
        TaskKind::Occupancy,
        TaskKind::Audio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Fit => "fit",
            TaskKind::Denoise => "denoise",
            TaskKind::Sr => "sr",
            TaskKind::Ct => "ct",
            TaskKind::Occupancy => "occupancy",
            TaskKind::Audio => "audio",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Metric used to rank runs of this task, and whether larger is better.
    pub fn primary_metric(self) -> (&'static str, bool) {
        match self {
            TaskKind::Fit | TaskKind::Denoise | TaskKind::Sr => ("psnr", true),
            TaskKind::Ct => ("ssim", true),
            TaskKind::Occupancy => ("iou", true),
            TaskKind::Audio => ("mse", false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Trident,
    Siren,
    Gabor,
    ReluPe,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Trident => "trident",
            Method::Siren => "siren",
            Method::Gabor => "gabor",
            Method::ReluPe => "relu_pe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    None,
    /// Raw coordinates only, no sine/cosine channels.
    NoFrequency,
    /// ReLU in place of the Gaussian window on the same encoded input.
    NoSpatial,
    /// Real Gabor wavelet network.
    NoOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Gaussian window scale.
    pub s0: f64,
    pub siren_omega0: f64,
    pub gabor_omega0: f64,
    pub gabor_s0: f64,
    /// Largest encoding frequency multiplier.
    pub sigma: f64,
    pub mapping_size: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden_layers: 2,
            hidden_width: 256,
            s0: 5.0,
            siren_omega0: 10.0,
            gabor_omega0: 20.0,
            gabor_s0: 10.0,
            sigma: 10.0,
            mapping_size: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    SheppLogan,
    Checker,
    Sphere,
    Chirp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// PGM/PPM, VOL0 or WAV file replacing the phantom.
    pub input: Option<String>,
    pub phantom: PhantomKind,
    /// Grid edge length of image and volume phantoms.
    pub size: usize,
    pub checker_cells: usize,
    pub sphere_radius: f64,
    pub audio_samples: usize,
    pub chirp_f0: f64,
    pub chirp_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub photons: f64,
    pub integration_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrConfig {
    pub factor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtConfig {
    pub projections: usize,
    /// `None` picks enough bins to cover the image diagonal.
    pub detectors: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyConfig {
    pub batch_size: usize,
    pub threshold: f64,
}

/// Everything a run needs; reports embed the fully resolved value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub task: TaskKind,
    pub method: Method,
    pub ablation: Ablation,
    pub seed: u64,
    pub iterations: usize,
    pub lr: f64,
    pub schedule: Schedule,
    pub checkpoint_every: usize,
    pub network: NetworkConfig,
    pub data: DataConfig,
    pub noise: NoiseConfig,
    pub sr: SrConfig,
    pub ct: CtConfig,
    pub occupancy: OccupancyConfig,
}

impl TaskConfig {
    /// Desk-scale defaults: half the usual iteration counts on small phantoms.
    pub fn defaults(task: TaskKind) -> TaskConfig {
        let mut cfg = TaskConfig {
            task,
            method: Method::Trident,
            ablation: Ablation::None,
            seed: 0,
            iterations: 1000,
            lr: 1e-3,
            schedule: Schedule::Exponential,
            checkpoint_every: 100,
            network: NetworkConfig::default(),
            data: DataConfig {
                input: None,
                phantom: PhantomKind::SheppLogan,
                size: 64,
                checker_cells: 8,
                sphere_radius: 0.5,
                audio_samples: 16_000,
                chirp_f0: 20.0,
                chirp_f1: 120.0,
            },
            noise: NoiseConfig {
                photons: 30.0,
                integration_time: 2.0,
            },
            sr: SrConfig { factor: 4 },
            ct: CtConfig {
                projections: 40,
                detectors: None,
            },
            occupancy: OccupancyConfig {
                batch_size: 1 << 16,
                threshold: 0.5,
            },
        };
        match task {
            TaskKind::Fit | TaskKind::Sr => {}
            TaskKind::Denoise => {
                // A narrower, lower-bandwidth net fits the noise later.
                cfg.data.phantom = PhantomKind::Checker;
                cfg.network.hidden_width = 128;
                cfg.network.sigma = 2.0;
            }
            TaskKind::Ct => {
                cfg.iterations = 2500;
                cfg.network.hidden_width = 300;
                // At s0 = 5 the untrained net is pixel-scale noise, which the sparse
                // sinogram never constrains away.
                cfg.network.s0 = 2.0;
                cfg.network.sigma = 3.0;
            }
            TaskKind::Occupancy => {
                cfg.iterations = 150;
                cfg.checkpoint_every = 50;
                cfg.lr = 5e-3;
                cfg.data.phantom = PhantomKind::Sphere;
            }
            TaskKind::Audio => {
                cfg.iterations = 4500;
                cfg.checkpoint_every = 500;
                cfg.schedule = Schedule::Constant;
                cfg.network.hidden_layers = 4;
                cfg.network.sigma = AUDIO_SIGMA;
                cfg.data.phantom = PhantomKind::Chirp;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.ablation != Ablation::None && self.method != Method::Trident {
            return bad(format!("ablation {:?} requires method trident", self.ablation));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.task == TaskKind::Sr && (self.sr.factor == 0 || self.data.size % self.sr.factor != 0) {
            return bad(format!("sr.factor {} must divide data.size {}", self.sr.factor, self.data.size));
        }
        if self.task == TaskKind::Ct && self.ct.projections == 0 {
            return bad("ct.projections must be at least 1".into());
        }
        if self.task == TaskKind::Occupancy && self.occupancy.batch_size == 0 {
            return bad("occupancy.batch_size must be at least 1".into());
        }
        if self.data.size == 0 || self.data.audio_samples == 0 {
            return bad("data sizes must be positive".into());
        }
        self.network_spec(1, 1).validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Activation and input mapping for the configured method and ablation.
    pub fn architecture(&self) -> (ActivationKind, Option<EncodingSpec>) {
        let n = &self.network;
        let encoding = EncodingSpec {
            sigma: n.sigma,
            mapping_size: n.mapping_size,
            include_identity: true,
        };
        let trident = ActivationKind::Trident { s0: n.s0 };
        let gabor = ActivationKind::GaborReal {
            omega0: n.gabor_omega0,
            s0: n.gabor_s0,
        };
        match (self.method, self.ablation) {
            (Method::Trident, Ablation::None) => (trident, Some(encoding)),
            (Method::Trident, Ablation::NoFrequency) => (trident, None),
            (Method::Trident, Ablation::NoSpatial) | (Method::ReluPe, _) => (ActivationKind::Relu, Some(encoding)),
            (Method::Trident, Ablation::NoOrder) | (Method::Gabor, _) => (gabor, None),
            (Method::Siren, _) => (ActivationKind::Sine { omega0: n.siren_omega0 }, None),
        }
    }

    pub fn network_spec(&self, input_dim: usize, output_dim: usize) -> NetworkSpec {
        let (activation, encoding) = self.architecture();
        NetworkSpec {
            input_dim,
            output_dim,
            hidden_layers: self.network.hidden_layers,
            hidden_width: self.network.hidden_width,
            activation,
            encoding,
            init_seed: self.seed,
        }
    }

    /// Label used in reports, e.g. `trident` or `trident/no_order`.
    pub fn method_label(&self) -> String {
        match self.ablation {
            Ablation::None => self.method.name().to_string(),
            a => format!(
                "{}/{}",
                self.method.name(),
                serde_json::to_value(a).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
            ),
        }
    }
}

/// Encoding scale for the waveform task: one second spans two coordinate units, so the
/// highest band of interest needs far more cycles per unit than an image does.
pub const AUDIO_SIGMA: f64 = 256.0;

/// Recursively overlays `top` onto `base`; objects merge key by key, anything else replaces.
pub fn deep_merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets a dot-separated path, parsing `raw` as JSON and falling back to a string.
pub fn set_path(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{path}: {} is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(Error::Config(format!("unknown config key {path}")));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .get_mut(*part)
            .ok_or_else(|| Error::Config(format!("unknown config key {path}")))?;
    }
    Err(Error::Config("empty config key".into()))
}

/// Parses `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Defaults for the task named in `user` (or in the overrides), then the user JSON, then
/// the overrides, then validation.
pub fn resolve_config(user: Value, overrides: &[(String, String)]) -> Result<TaskConfig> {
    if !user.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    let task_name = overrides
        .iter()
        .rev()
        .find(|(k, _)| k == "task")
        .map(|(_, v)| v.trim_matches('"').to_string())
        .or_else(|| user.get("task").and_then(Value::as_str).map(String::from))
        .ok_or_else(|| Error::Config("config does not name a task".into()))?;
    let task = TaskKind::parse(&task_name).ok_or_else(|| Error::Config(format!("unknown task {task_name:?}")))?;
    let mut merged = serde_json::to_value(TaskConfig::defaults(task))?;
    deep_merge(&mut merged, user);
    for (k, v) in overrides {
        set_path(&mut merged, k, v)?;
    }
    let cfg: TaskConfig = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Dot paths of every numeric leaf of the config.
pub fn numeric_paths(cfg: &TaskConfig) -> Vec<String> {
    fn walk(v: &Value, prefix: &str, out: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, child) in m {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(child, &p, out);
                }
            }
            Value::Number(_) => out.push(prefix.to_string()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(&serde_json::to_value(cfg).expect("config serializes"), "", &mut out);
    // Optional numeric fields serialize as null when unset.
    if cfg.ct.detectors.is_none() {
        out.push("ct.detectors".into());
    }
    out
}

/// Resolves a sweep axis given as a full dot path or as a unique leaf name.
pub fn resolve_axis(cfg: &TaskConfig, axis: &str) -> Result<String> {
    let paths = numeric_paths(cfg);
    if paths.iter().any(|p| p == axis) {
        return Ok(axis.to_string());
    }
    let matches: Vec<&String> = paths.iter().filter(|p| p.rsplit('.').next() == Some(axis)).collect();
    match matches.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(Error::Config(format!("unknown sweep axis {axis:?}"))),
        many => Err(Error::Config(format!("sweep axis {axis:?} is ambiguous: {many:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn protocol_defaults() {
        let fit = TaskConfig::defaults(TaskKind::Fit);
        assert_eq!((fit.network.hidden_layers, fit.network.hidden_width), (2, 256));
        assert_eq!(fit.network.s0, 5.0);
        assert_eq!(fit.network.siren_omega0, 10.0);
        assert_eq!(TaskConfig::defaults(TaskKind::Ct).network.hidden_width, 300);
        let audio = TaskConfig::defaults(TaskKind::Audio);
        assert_eq!(audio.network.hidden_layers + 1, 5);
        assert_eq!(audio.schedule, Schedule::Constant);
        let den = TaskConfig::defaults(TaskKind::Denoise);
        assert_eq!((den.noise.photons, den.noise.integration_time), (30.0, 2.0));
    }

    #[test]
    fn merge_then_override() {
        let user = json!({"task": "ct", "network": {"s0": 10.0}, "ct": {"projections": 20}});
        let cfg = resolve_config(user, &[("ct.projections".into(), "10".into())]).unwrap();
        assert_eq!(cfg.network.s0, 10.0);
        assert_eq!(cfg.network.hidden_width, 300);
        assert_eq!(cfg.ct.projections, 10);
        let cfg = resolve_config(json!({"task": "fit"}), &[("method".into(), "siren".into())]).unwrap();
        assert_eq!(cfg.method, Method::Siren);
    }

    #[test]
    fn config_errors() {
        assert!(resolve_config(json!({}), &[]).is_err());
        assert!(resolve_config(json!({"task": "paint"}), &[]).is_err());
        assert!(resolve_config(json!({"task": "fit", "netwrok": {}}), &[]).is_err());
        assert!(resolve_config(json!({"task": "fit"}), &[("network.width".into(), "3".into())]).is_err());
        let e = resolve_config(json!({"task": "fit", "method": "siren", "ablation": "no_order"}), &[]);
        assert!(matches!(e, Err(Error::Config(_))));
        assert!(resolve_config(json!({"task": "sr", "sr": {"factor": 3}}), &[]).is_err());
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn ablation_architectures() {
        let mut cfg = TaskConfig::defaults(TaskKind::Fit);
        cfg.ablation = Ablation::NoFrequency;
        assert!(matches!(cfg.architecture(), (ActivationKind::Trident { .. }, None)));
        cfg.ablation = Ablation::NoSpatial;
        assert!(matches!(cfg.architecture(), (ActivationKind::Relu, Some(_))));
        cfg.ablation = Ablation::NoOrder;
        assert!(matches!(cfg.architecture(), (ActivationKind::GaborReal { .. }, None)));
        assert_eq!(cfg.method_label(), "trident/no_order");
    }

    #[test]
    fn axis_lookup() {
        let cfg = TaskConfig::defaults(TaskKind::Ct);
        assert_eq!(resolve_axis(&cfg, "s0").unwrap(), "network.s0");
        assert_eq!(resolve_axis(&cfg, "projections").unwrap(), "ct.projections");
        assert_eq!(resolve_axis(&cfg, "network.sigma").unwrap(), "network.sigma");
        assert!(resolve_axis(&cfg, "colour").is_err());
    }
}
