//! Architecture strings such as `"3-A"` or `"2-A-1-A"`.
//!
//! Each `<n>-A` group is an embedding block of `n` dense layers followed by
//! an attention head, so `"2-A-1-A"` taps the 2nd and 3rd dense layers.

use crate::error::{Error, Result};

/// The nine architectures compared in the original single/multi-level study.
pub const PRESET_ARCHS: [&str; 9] = [
    "1-A-1-A-1-A",
    "2-A-1-A",
    "3-A",
    "2-A-2-A-2-A",
    "3-A-3-A",
    "6-A",
    "3-A-3-A-3-A",
    "5-A-4-A",
    "9-A",
];

pub const DEFAULT_HIDDEN_UNITS: usize = 600;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArchSpec {
    pub block_depths: Vec<usize>,
    pub hidden_units: usize,
    pub n_classes: usize,
}

impl ArchSpec {
    pub fn new(block_depths: Vec<usize>, hidden_units: usize, n_classes: usize) -> Result<Self> {
        if block_depths.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one embedding block is required".into(),
            ));
        }
        if block_depths.contains(&0) {
            return Err(Error::InvalidConfig(
                "embedding blocks need at least one layer".into(),
            ));
        }
        if hidden_units == 0 || n_classes == 0 {
            return Err(Error::InvalidConfig(
                "hidden_units and n_classes must be positive".into(),
            ));
        }
        Ok(Self {
            block_depths,
            hidden_units,
            n_classes,
        })
    }

    pub fn parse(text: &str, hidden_units: usize, n_classes: usize) -> Result<Self> {
        Self::new(parse_arch(text)?, hidden_units, n_classes)
    }

    pub fn levels(&self) -> usize {
        self.block_depths.len()
    }

    pub fn total_layers(&self) -> usize {
        self.block_depths.iter().sum()
    }

    pub fn arch_string(&self) -> String {
        format_arch(&self.block_depths)
    }

    /// Trainable parameters for input width `feature_dim`: dense weights and
    /// biases plus batch-norm scale and shift for every hidden layer, two
    /// `H → K` dense maps per head, and the `KL → K` output layer.
    pub fn param_count(&self, feature_dim: usize) -> usize {
        let (h, k, l) = (self.hidden_units, self.n_classes, self.levels());
        let first = feature_dim * h + h + 2 * h;
        let rest = (self.total_layers() - 1) * (h * h + h + 2 * h);
        first + rest + l * 2 * (h * k + k) + (k * l * k + k)
    }
}

impl std::fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (H={}, K={})",
            self.arch_string(),
            self.hidden_units,
            self.n_classes
        )
    }
}

pub fn format_arch(depths: &[usize]) -> String {
    depths
        .iter()
        .map(|d| format!("{d}-A"))
        .collect::<Vec<_>>()
        .join("-")
}

/// Parses `<int> "-A" ("-" <int> "-A")*` into block depths.
pub fn parse_arch(text: &str) -> Result<Vec<usize>> {
    let bytes = text.as_bytes();
    let syntax = |position: usize, message: &str| Error::ArchSyntax {
        position,
        message: message.to_string(),
    };
    let mut depths = Vec::new();
    let mut pos = 0;
    loop {
        if bytes.get(pos) == Some(&b'-') && depths.is_empty() {
            return Err(syntax(
                pos,
                "block depth must be positive, found a negative number",
            ));
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(syntax(pos, "expected a block depth"));
        }
        let depth: usize = text[start..pos]
            .parse()
            .map_err(|_| syntax(start, "block depth is too large"))?;
        if depth == 0 {
            return Err(syntax(start, "block depth must be positive, found 0"));
        }
        depths.push(depth);
        if !text[pos..].starts_with("-A") {
            return Err(syntax(pos, "expected \"-A\" after the block depth"));
        }
        pos += 2;
        if pos == bytes.len() {
            return Ok(depths);
        }
        if bytes[pos] != b'-' {
            return Err(syntax(pos, "expected \"-\" between blocks"));
        }
        pos += 1;
    }
}
