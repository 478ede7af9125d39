use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::VolumeSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Toy,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Toy => "toy",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "toy" => Ok(Preset::Toy),
            "custom" => Ok(Preset::Custom),
            _ => Err(Error::contract(format!("unknown preset {s:?}"))),
        }
    }
}

/// Network shape and geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub preset: Preset,
    /// Semantic classes `C`; completion predicts `C + 1` channels (0 = empty).
    pub num_classes: usize,
    /// Channel width of each U-Net level, finest first.
    pub seg_channels: Vec<usize>,
    pub seg_voxel_size: f64,
    pub ssc_spec: VolumeSpec,
    pub ssc_blocks: usize,
    pub ssc_width: usize,
    /// Shape-embedding width `D^e`.
    pub embed_dim: usize,
    pub pvi_k: usize,
    pub pvi_layers: usize,
    pub pvi_hidden: usize,
    pub leaky_slope: f64,
}

/// Completion volume used by the toy preset and the synthetic generator:
/// 6.4 m × 6.4 m × 1.6 m at 0.2 m, sensor at the middle of the `x = 0` face.
pub fn toy_ssc_spec() -> VolumeSpec {
    VolumeSpec::new([0.0, -3.2, -0.6], 0.2, [32, 32, 8]).expect("static spec")
}

impl ModelConfig {
    pub fn paper() -> Self {
        Self {
            preset: Preset::Paper,
            num_classes: 19,
            seg_channels: vec![16, 32, 48, 64, 80, 96, 112],
            seg_voxel_size: 0.05,
            ssc_spec: VolumeSpec::paper_ssc(),
            ssc_blocks: 5,
            ssc_width: 32,
            embed_dim: 32,
            pvi_k: 8,
            pvi_layers: 1,
            pvi_hidden: 32,
            leaky_slope: 0.01,
        }
    }

    pub fn toy() -> Self {
        Self {
            preset: Preset::Toy,
            num_classes: 4,
            seg_channels: vec![8, 16, 24],
            seg_voxel_size: 0.1,
            ssc_spec: toy_ssc_spec(),
            ssc_blocks: 3,
            ssc_width: 16,
            embed_dim: 16,
            pvi_k: 8,
            pvi_layers: 1,
            pvi_hidden: 32,
            leaky_slope: 0.01,
        }
    }

    pub fn from_preset(p: Preset) -> Result<Self> {
        match p {
            Preset::Paper => Ok(Self::paper()),
            Preset::Toy => Ok(Self::toy()),
            Preset::Custom => Err(Error::contract("a custom preset must be loaded from a config file")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.num_classes > 254 {
            return Err(Error::contract("num_classes must be in 1..=254"));
        }
        if self.seg_channels.is_empty() || self.seg_channels.contains(&0) {
            return Err(Error::contract("seg_channels must be non-empty and positive"));
        }
        if !(self.seg_voxel_size > 0.0) {
            return Err(Error::contract("seg_voxel_size must be positive"));
        }
        if self.ssc_spec.dims.iter().any(|d| d % 2 != 0) {
            return Err(Error::contract(format!(
                "completion dims {:?} must be even for the stride-2 stage",
                self.ssc_spec.dims
            )));
        }
        if self.ssc_width == 0 || self.embed_dim == 0 || self.pvi_hidden == 0 {
            return Err(Error::contract("layer widths must be positive"));
        }
        if self.pvi_k == 0 || self.pvi_layers == 0 {
            return Err(Error::contract("pvi_k and pvi_layers must be at least 1"));
        }
        Ok(())
    }

    /// `key = value` lines, one per field.
    pub fn to_kv(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let s = &self.ssc_spec;
        let mut out = String::new();
        let _ = writeln!(out, "preset = {}", self.preset.name());
        let _ = writeln!(out, "num_classes = {}", self.num_classes);
        let _ = writeln!(out, "seg_channels = {}", list(&self.seg_channels));
        let _ = writeln!(out, "seg_voxel_size = {}", self.seg_voxel_size);
        let _ = writeln!(out, "ssc_origin = {},{},{}", s.origin[0], s.origin[1], s.origin[2]);
        let _ = writeln!(out, "ssc_voxel_size = {}", s.voxel_size);
        let _ = writeln!(out, "ssc_dims = {}", list(&s.dims));
        let _ = writeln!(out, "ssc_blocks = {}", self.ssc_blocks);
        let _ = writeln!(out, "ssc_width = {}", self.ssc_width);
        let _ = writeln!(out, "embed_dim = {}", self.embed_dim);
        let _ = writeln!(out, "pvi_k = {}", self.pvi_k);
        let _ = writeln!(out, "pvi_layers = {}", self.pvi_layers);
        let _ = writeln!(out, "pvi_hidden = {}", self.pvi_hidden);
        let _ = writeln!(out, "leaky_slope = {}", self.leaky_slope);
        out
    }

    /// Parses `key = value` lines. Keys start from the named preset (toy if absent) and
    /// override it; `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;
        let preset = match pairs.iter().find(|(k, _, _)| k == "preset") {
            Some((_, v, _)) => Preset::parse(v)?,
            None => Preset::Toy,
        };
        let mut cfg = match preset {
            Preset::Custom => Self::toy(),
            p => Self::from_preset(p)?,
        };
        cfg.preset = preset;
        let mut origin = cfg.ssc_spec.origin;
        let mut vsize = cfg.ssc_spec.voxel_size;
        let mut dims = cfg.ssc_spec.dims;
        for (key, value, offset) in &pairs {
            let bad = |what: &str| Error::format(*offset, format!("{key}: {what} {value:?}"));
            let usize_of = |v: &str| v.trim().parse::<usize>().map_err(|_| bad("expected an integer, got"));
            let f64_of = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("expected a number, got"));
            match key.as_str() {
                "preset" => {}
                "num_classes" => cfg.num_classes = usize_of(value)?,
                "seg_channels" => cfg.seg_channels = value.split(',').map(usize_of).collect::<Result<_>>()?,
                "seg_voxel_size" => cfg.seg_voxel_size = f64_of(value)?,
                "ssc_origin" => {
                    let v: Vec<f64> = value.split(',').map(f64_of).collect::<Result<_>>()?;
                    origin = v.try_into().map_err(|_| bad("expected three numbers, got"))?;
                }
                "ssc_voxel_size" => vsize = f64_of(value)?,
                "ssc_dims" => {
                    let v: Vec<usize> = value.split(',').map(usize_of).collect::<Result<_>>()?;
                    dims = v.try_into().map_err(|_| bad("expected three integers, got"))?;
                }
                "ssc_blocks" => cfg.ssc_blocks = usize_of(value)?,
                "ssc_width" => cfg.ssc_width = usize_of(value)?,
                "embed_dim" => cfg.embed_dim = usize_of(value)?,
                "pvi_k" => cfg.pvi_k = usize_of(value)?,
                "pvi_layers" => cfg.pvi_layers = usize_of(value)?,
                "pvi_hidden" => cfg.pvi_hidden = usize_of(value)?,
                "leaky_slope" => cfg.leaky_slope = f64_of(value)?,
                _ => return Err(Error::format(*offset, format!("unknown key {key:?}"))),
            }
        }
        cfg.ssc_spec = VolumeSpec::new(origin, vsize, dims)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Splits `key = value` lines; returns the byte offset of each line for error reporting.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let content = line.split('#').next().unwrap_or("").trim();
        if !content.is_empty() {
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| Error::format(offset, format!("expected `key = value`, got {content:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string(), offset));
        }
        offset += line.len();
    }
    Ok(out)
}
