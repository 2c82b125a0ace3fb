//! Band-limited value noise: random lattice values blended with a smoothstep
//! over a few octaves.

/// Deterministic multi-octave value noise with intensities in about
/// `[20, 235]`.
#[derive(Debug, Clone, Copy)]
pub struct ValueNoise {
    seed: u64,
    cell: f64,
    octaves: u32,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ValueNoise {
    /// `cell` is the lattice spacing of the coarsest octave in pixels.
    pub fn new(seed: u64, cell: f64, octaves: u32) -> Self {
        assert!(cell > 0.0 && octaves >= 1);
        Self { seed, cell, octaves }
    }

    fn lattice(&self, octave: u32, ix: i64, iy: i64) -> f64 {
        let h = splitmix(
            self.seed
                ^ splitmix(ix as u64 ^ (u64::from(octave) << 56))
                ^ splitmix((iy as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93)),
        );
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn octave(&self, octave: u32, x: f64, y: f64) -> f64 {
        let (xf, yf) = (x.floor(), y.floor());
        let (ix, iy) = (xf as i64, yf as i64);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (sx, sy) = (smooth(x - xf), smooth(y - yf));
        let a = self.lattice(octave, ix, iy);
        let b = self.lattice(octave, ix + 1, iy);
        let c = self.lattice(octave, ix, iy + 1);
        let d = self.lattice(octave, ix + 1, iy + 1);
        let top = a + sx * (b - a);
        let bottom = c + sx * (d - c);
        top + sy * (bottom - top)
    }

    /// Noise value in `[0, 1]`.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let (mut sum, mut norm, mut amp, mut cell) = (0.0, 0.0, 1.0, self.cell);
        for o in 0..self.octaves {
            sum += amp * self.octave(o, x / cell, y / cell);
            norm += amp;
            amp *= 0.5;
            cell *= 0.5;
        }
        sum / norm
    }

    /// Intensity with the contrast stretched around mid-gray.
    pub fn intensity(&self, x: f64, y: f64) -> f64 {
        let v = self.value(x, y);
        (128.0 + 2.2 * 107.0 * (v - 0.5)).clamp(20.0, 235.0)
    }
}
