use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{format_fixed2, parse_number};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxClass {
    Vehicle,
    Pedestrian,
    Cyclist,
    Motorcyclist,
    Sign,
    Other,
}

impl BoxClass {
    pub const ALL: [BoxClass; 6] = [
        BoxClass::Vehicle,
        BoxClass::Pedestrian,
        BoxClass::Cyclist,
        BoxClass::Motorcyclist,
        BoxClass::Sign,
        BoxClass::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BoxClass::Vehicle => "vehicle",
            BoxClass::Pedestrian => "pedestrian",
            BoxClass::Cyclist => "cyclist",
            BoxClass::Motorcyclist => "motorcyclist",
            BoxClass::Sign => "sign",
            BoxClass::Other => "other",
        }
    }
}

impl fmt::Display for BoxClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoxClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoxClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Oriented 3D box in the vehicle frame. `theta` is in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
    pub cls: BoxClass,
}

impl Box3D {
    pub fn validate(&self) -> Result<()> {
        let fields = [self.x, self.y, self.z, self.l, self.w, self.h, self.theta];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry(format!("non-finite box field in {self:?}")));
        }
        if !(self.l > 0.0 && self.w > 0.0 && self.h > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "box dimensions must be positive, got {} x {} x {}",
                self.l, self.w, self.h
            )));
        }
        if !(self.theta > -PI && self.theta <= PI) {
            return Err(Error::InvalidGeometry(format!(
                "heading {} outside (-pi, pi]",
                self.theta
            )));
        }
        Ok(())
    }

    /// Planar range from the ego origin; the sort key for encoding.
    pub fn depth(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Stable ascending sort by [`Box3D::depth`].
pub fn sort_by_depth(boxes: &mut [Box3D]) {
    boxes.sort_by(|a, b| a.depth().partial_cmp(&b.depth()).unwrap_or(Ordering::Equal));
}

/// `x y z l w h theta cls` with two decimals per number.
pub fn encode_box(b: &Box3D) -> Result<String> {
    b.validate()?;
    let mut out = String::new();
    for v in [b.x, b.y, b.z, b.l, b.w, b.h, b.theta] {
        out.push_str(&format_fixed2(v)?);
        out.push(' ');
    }
    out.push_str(b.cls.as_str());
    Ok(out)
}

/// Depth-sorted boxes joined by `"; "`. An empty set encodes to `""`.
pub fn encode_boxes(boxes: &[Box3D]) -> Result<String> {
    let mut sorted = boxes.to_vec();
    sort_by_depth(&mut sorted);
    let items = sorted.iter().map(encode_box).collect::<Result<Vec<_>>>()?;
    Ok(items.join("; "))
}

/// Inverse of [`encode_boxes`]; keeps the order of the text. A single
/// trailing `;` is tolerated.
pub fn decode_boxes(s: &str) -> Result<Vec<Box3D>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut items: Vec<&str> = s.split(';').collect();
    if items.len() > 1 && items.last().is_some_and(|t| t.trim().is_empty()) {
        items.pop();
    }
    items
        .iter()
        .enumerate()
        .map(|(index, item)| {
            let fields: Vec<&str> = item.split_whitespace().collect();
            if fields.len() != 8 {
                return Err(Error::parse_item(
                    index,
                    format!("expected 8 fields, found {}", fields.len()),
                ));
            }
            let mut nums = [0.0; 7];
            for (slot, tok) in nums.iter_mut().zip(&fields[..7]) {
                *slot = parse_number(tok)
                    .ok_or_else(|| Error::parse_item(index, format!("invalid number `{tok}`")))?;
            }
            let cls: BoxClass = fields[7].parse()?;
            let b = Box3D {
                x: nums[0],
                y: nums[1],
                z: nums[2],
                l: nums[3],
                w: nums[4],
                h: nums[5],
                theta: nums[6],
                cls,
            };
            b.validate()
                .map_err(|e| Error::parse_item(index, e.to_string()))?;
            Ok(b)
        })
        .collect()
}
