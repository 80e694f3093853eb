use serde::{Deserialize, Serialize};

use crate::config::{parse_list, parse_value, render_list, ConfigSection};
use crate::error::ConfigError;

/// Shape hyper-parameters of the network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Pixels per raster side.
    pub raster_size: usize,
    pub in_channels: usize,
    pub stem_channels: [usize; 3],
    pub stage_depths: [usize; 3],
    pub stage_channels: [usize; 3],
    pub heads: [usize; 3],
    pub kv_reduction_stride: usize,
    pub ffn_expansion: usize,
    pub lstm_hidden: usize,
    pub waypoints: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            raster_size: 64,
            in_channels: 3,
            stem_channels: [16, 32, 32],
            stage_depths: [2, 2, 2],
            stage_channels: [32, 64, 128],
            heads: [2, 4, 8],
            kv_reduction_stride: 2,
            ffn_expansion: 4,
            lstm_hidden: 128,
            waypoints: 12,
        }
    }
}

impl NetworkConfig {
    /// Desk-scale training config: 64 px raster, one block per stage and
    /// narrow channels so a few epochs fit in minutes on one core.
    pub fn desk_tiny() -> Self {
        NetworkConfig {
            raster_size: 64,
            stem_channels: [8, 16, 16],
            stage_depths: [1, 1, 1],
            stage_channels: [16, 32, 64],
            heads: [2, 4, 8],
            lstm_hidden: 32,
            ..Self::default()
        }
    }

    /// The smallest config used for end-to-end gradient checks.
    pub fn gradcheck_tiny() -> Self {
        NetworkConfig {
            raster_size: 16,
            stem_channels: [4, 4, 4],
            stage_depths: [1, 1, 1],
            stage_channels: [4, 8, 8],
            heads: [1, 2, 2],
            lstm_hidden: 6,
            waypoints: 3,
            ..Self::default()
        }
    }

    /// Spatial extent of each stage's feature maps.
    pub fn stage_extents(&self) -> [usize; 3] {
        let s = self.raster_size / 2;
        [s, s.div_ceil(2), s.div_ceil(2).div_ceil(2)]
    }
}

impl ConfigSection for NetworkConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        fn triple(key: &str, value: &str) -> Result<[usize; 3], ConfigError> {
            let v: Vec<usize> = parse_list(key, value)?;
            v.try_into()
                .map_err(|_| ConfigError::invalid(key, "expected exactly 3 comma-separated values"))
        }
        match key {
            "raster_size" => self.raster_size = parse_value(key, value)?,
            "in_channels" => self.in_channels = parse_value(key, value)?,
            "stem_channels" => self.stem_channels = triple(key, value)?,
            "stage_depths" => self.stage_depths = triple(key, value)?,
            "stage_channels" => self.stage_channels = triple(key, value)?,
            "heads" => self.heads = triple(key, value)?,
            "kv_reduction_stride" => self.kv_reduction_stride = parse_value(key, value)?,
            "ffn_expansion" => self.ffn_expansion = parse_value(key, value)?,
            "lstm_hidden" => self.lstm_hidden = parse_value(key, value)?,
            "waypoints" => self.waypoints = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn render(&self) -> Vec<(&'static str, String)> {
        vec![
            ("raster_size", self.raster_size.to_string()),
            ("in_channels", self.in_channels.to_string()),
            ("stem_channels", render_list(&self.stem_channels)),
            ("stage_depths", render_list(&self.stage_depths)),
            ("stage_channels", render_list(&self.stage_channels)),
            ("heads", render_list(&self.heads)),
            ("kv_reduction_stride", self.kv_reduction_stride.to_string()),
            ("ffn_expansion", self.ffn_expansion.to_string()),
            ("lstm_hidden", self.lstm_hidden.to_string()),
            ("waypoints", self.waypoints.to_string()),
        ]
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |k: &str, m: String| Err(ConfigError::invalid(k, m));
        if self.in_channels != 3 {
            return bad("in_channels", "the raster has exactly 3 channels".into());
        }
        if self.raster_size < 8 || self.raster_size % 8 != 0 {
            return bad("raster_size", format!("{} is not a positive multiple of 8", self.raster_size));
        }
        if self.stem_channels.contains(&0) {
            return bad("stem_channels", "channel counts must be positive".into());
        }
        if self.stage_channels.contains(&0) {
            return bad("stage_channels", "channel counts must be positive".into());
        }
        if self.stage_depths.contains(&0) {
            return bad("stage_depths", "every stage needs at least one block".into());
        }
        if self.stem_channels[2] != self.stage_channels[0] {
            return bad(
                "stem_channels",
                format!(
                    "last stem width {} must equal the first stage width {}",
                    self.stem_channels[2], self.stage_channels[0]
                ),
            );
        }
        for (i, (&h, &c)) in self.heads.iter().zip(&self.stage_channels).enumerate() {
            if h == 0 || c % h != 0 {
                return bad("heads", format!("stage {i}: {h} heads do not divide {c} channels"));
            }
        }
        let s = self.kv_reduction_stride;
        if s == 0 {
            return bad("kv_reduction_stride", "must be at least 1".into());
        }
        if let Some(e) = self.stage_extents().iter().find(|&&e| e % s != 0 || e < s) {
            return bad(
                "kv_reduction_stride",
                format!("stage extent {e} is not a multiple of {s}"),
            );
        }
        if self.ffn_expansion != 4 {
            return bad("ffn_expansion", "the refinement unit expands by exactly 4".into());
        }
        if self.lstm_hidden == 0 {
            return bad("lstm_hidden", "must be positive".into());
        }
        if self.waypoints == 0 {
            return bad("waypoints", "must be positive".into());
        }
        Ok(())
    }
}
