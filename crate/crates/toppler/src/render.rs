//! Grayscale heatmap rendering of mass distributions to binary PGM (P5).
//!
//! One pixel per vertex in the requested bounds; darkness is monotone in
//! mass, and zero mass renders white. PGM is bit-exact and diffable, which
//! keeps renders reproducible across platforms.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graphs::{Graph, VertexKey};
use crate::mass::MassDist;

/// How mass maps to darkness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorScale {
    /// Darkness proportional to mass.
    Linear,
    /// Darkness proportional to log mass; zero mass still maps to white.
    Log,
}

impl std::str::FromStr for ColorScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ColorScale::Linear),
            "log" => Ok(ColorScale::Log),
            other => Err(Error::Parse(format!("unknown color scale `{other}`"))),
        }
    }
}

/// Inclusive pixel bounds in vertex coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub xmin: i64,
    pub xmax: i64,
    pub ymin: i64,
    pub ymax: i64,
}

impl Bounds {
    /// The square [-r, r]^2.
    pub fn square(r: i64) -> Bounds {
        Bounds {
            xmin: -r,
            xmax: r,
            ymin: -r,
            ymax: r,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.xmin > self.xmax || self.ymin > self.ymax {
            return Err(Error::Parameter(format!("empty bounds {self:?}")));
        }
        let w = (self.xmax - self.xmin + 1) as u64;
        let h = (self.ymax - self.ymin + 1) as u64;
        if w * h > 100_000_000 {
            return Err(Error::ResourceGuard(format!(
                "render of {w}x{h} pixels refused"
            )));
        }
        Ok(())
    }
}

/// Gray level for a mass given the nonzero-mass range in view. 255 = white.
/// Nonzero masses occupy [63, 207] so the faintest mass stays visibly
/// distinct from empty sites; all-equal masses come out a uniform gray.
fn shade(m: f64, lo: f64, hi: f64, scale: ColorScale) -> u8 {
    if m <= 0.0 {
        return 255;
    }
    let frac = match scale {
        ColorScale::Linear => {
            if hi <= 0.0 {
                1.0
            } else {
                m / hi
            }
        }
        ColorScale::Log => {
            if hi <= lo {
                1.0
            } else {
                (m.ln() - lo.ln()) / (hi.ln() - lo.ln())
            }
        }
    };
    207 - (frac.clamp(0.0, 1.0) * 144.0).round() as u8
}

/// Renders `dist` over `bounds` to a binary PGM file. Lattice Z^2 and the
/// comb are supported; rows run from ymax down to ymin.
pub fn render_heatmap(
    g: &dyn Graph,
    dist: &MassDist<f64>,
    bounds: Bounds,
    out_path: &Path,
    scale: ColorScale,
) -> Result<()> {
    bounds.validate()?;
    let key: fn(i64, i64) -> VertexKey = match g.family_name() {
        "lattice" if g.origin() == VertexKey::Lattice(vec![0, 0]) => {
            |x, y| VertexKey::Lattice(vec![x, y])
        }
        "comb" => |x, y| VertexKey::Comb(x, y),
        other => {
            return Err(Error::Unsupported(format!(
                "rendering supports lattice d=2 and comb, got {other}"
            )))
        }
    };

    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for y in bounds.ymin..=bounds.ymax {
        for x in bounds.xmin..=bounds.xmax {
            let m = dist.get(&key(x, y));
            if m > 0.0 {
                lo = lo.min(m);
                hi = hi.max(m);
            }
        }
    }

    let w = (bounds.xmax - bounds.xmin + 1) as usize;
    let h = (bounds.ymax - bounds.ymin + 1) as usize;
    let mut pixels = Vec::with_capacity(w * h);
    for y in (bounds.ymin..=bounds.ymax).rev() {
        for x in bounds.xmin..=bounds.xmax {
            pixels.push(shade(dist.get(&key(x, y)), lo, hi, scale));
        }
    }

    let mut f = std::io::BufWriter::new(std::fs::File::create(out_path)?);
    write!(f, "P5\n{w} {h}\n255\n")?;
    f.write_all(&pixels)?;
    f.flush()?;
    Ok(())
}
