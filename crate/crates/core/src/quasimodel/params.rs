use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A named contiguous block of a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Model-specific partition of a flat parameter vector into named segments.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Layout {
    segments: Vec<Segment>,
}

impl Layout {
    /// Builds a layout from `(name, len)` pairs laid out back to back.
    pub fn from_lengths<S: Into<String>>(parts: impl IntoIterator<Item = (S, usize)>) -> Self {
        let mut offset = 0;
        let segments = parts
            .into_iter()
            .map(|(name, len)| {
                let seg = Segment {
                    name: name.into(),
                    offset,
                    len,
                };
                offset += len;
                seg
            })
            .collect();
        Self { segments }
    }

    pub fn flat(len: usize) -> Self {
        Self::from_lengths([("theta", len)])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// A flat parameter vector together with the layout of its owning model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVec {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVec {
    pub fn new(values: Vec<f64>, layout: Arc<Layout>) -> Result<Self> {
        check_len("theta", layout.total_len(), values.len())?;
        Ok(Self { values, layout })
    }

    /// A parameter vector with a single anonymous segment.
    pub fn flat(values: Vec<f64>) -> Self {
        let layout = Arc::new(Layout::flat(values.len()));
        Self { values, layout }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, Arc::clone(&self.layout))
    }

    pub fn segment(&self, name: &str) -> Result<&[f64]> {
        let seg = self
            .layout
            .segment(name)
            .ok_or_else(|| Error::InvalidModel(format!("no parameter segment named `{name}`")))?;
        Ok(&self.values[seg.offset..seg.offset + seg.len])
    }
}

impl Deref for ParamVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl Serialize for ParamVec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(s)
    }
}
