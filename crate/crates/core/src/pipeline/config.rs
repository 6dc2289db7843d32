use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{BinLayout, Channel, SLOT_FRAMES};
use crate::unmasking::UnmaskParams;

/// Which channels feed the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSelection {
    #[default]
    Motion,
    Appearance,
    /// Both channels, averaged per frame.
    Fusion,
}

impl ChannelSelection {
    pub fn channels(self) -> Vec<Channel> {
        match self {
            ChannelSelection::Motion => vec![Channel::Motion],
            ChannelSelection::Appearance => vec![Channel::Appearance],
            ChannelSelection::Fusion => vec![Channel::Motion, Channel::Appearance],
        }
    }

    pub fn uses(self, channel: Channel) -> bool {
        self.channels().contains(&channel)
    }
}

impl std::str::FromStr for ChannelSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "motion" => Ok(Self::Motion),
            "appearance" => Ok(Self::Appearance),
            "fusion" => Ok(Self::Fusion),
            other => Err(Error::Argument(format!(
                "channel `{other}` is not motion, appearance or fusion"
            ))),
        }
    }
}

impl std::fmt::Display for ChannelSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Motion => "motion",
            Self::Appearance => "appearance",
            Self::Fusion => "fusion",
        })
    }
}

/// Detector parameters. Defaults: `w=10, stride=5, k=10, m=50, lambda=0.1`,
/// 2x2 bins, temporal smoothing sigma of 10 frames, motion channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Frames per window half.
    pub w: usize,
    pub stride: usize,
    /// Unmasking loops.
    pub k: usize,
    /// Features eliminated per loop.
    pub m: usize,
    pub lambda: f64,
    pub bins: BinLayout,
    /// Gaussian sigma (frames) for temporal smoothing; 0 disables it.
    pub smooth_sigma: f64,
    pub channel: ChannelSelection,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            w: 10,
            stride: 5,
            k: 10,
            m: 50,
            lambda: 0.1,
            bins: BinLayout::default(),
            smooth_sigma: 10.0,
            channel: ChannelSelection::Motion,
        }
    }
}

/// Keys accepted by [`DetectorConfig::set`]; they double as CLI flag names.
pub const CONFIG_KEYS: [&str; 8] = ["w", "stride", "k", "m", "lambda", "bins", "smooth-sigma", "channel"];

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channel.uses(Channel::Motion) && (self.w < SLOT_FRAMES || !self.w.is_multiple_of(SLOT_FRAMES))
        {
            return Err(Error::Argument(format!(
                "w = {} must be a positive multiple of {SLOT_FRAMES} for the motion channel",
                self.w
            )));
        }
        if self.w == 0 {
            return Err(Error::Argument("w must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Argument("stride must be at least 1".into()));
        }
        if !(self.smooth_sigma.is_finite() && self.smooth_sigma >= 0.0) {
            return Err(Error::Argument(format!(
                "smoothing sigma {} must be finite and non-negative",
                self.smooth_sigma
            )));
        }
        self.bins.validate()?;
        self.unmask_params().validate()
    }

    pub fn unmask_params(&self) -> UnmaskParams {
        UnmaskParams {
            loops: self.k,
            eliminate: self.m,
            lambda: self.lambda,
        }
    }

    pub fn channels(&self) -> Vec<Channel> {
        self.channel.channels()
    }

    /// Sets one parameter from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Argument(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "w" => self.w = parse(key, value)?,
            "stride" | "s" => self.stride = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "m" => self.m = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "bins" => self.bins = value.parse()?,
            "smooth-sigma" => self.smooth_sigma = parse(key, value)?,
            "channel" => self.channel = value.parse()?,
            other => {
                return Err(Error::Argument(format!(
                    "unknown config key `{other}` (expected one of {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a flat `key=value` file over `self`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Argument(format!("config line {}: expected key=value", n + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// The configuration as `key=value` lines, readable by [`Self::apply_kv`].
    pub fn to_kv(&self) -> String {
        format!(
            "w={}\nstride={}\nk={}\nm={}\nlambda={}\nbins={}\nsmooth-sigma={}\nchannel={}\n",
            self.w, self.stride, self.k, self.m, self.lambda, self.bins, self.smooth_sigma, self.channel
        )
    }
}
