//! Counter-based randomness: (master seed, stream id, draw index) pins every
//! variate. Parallel paths take distinct stream ids; no hidden global RNG.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Hands out independent reproducible streams derived from one master seed.
#[derive(Debug, Clone, Copy)]
pub struct StreamFactory {
    master: u64,
}

impl StreamFactory {
    pub fn new(master_seed: u64) -> Self {
        StreamFactory { master: master_seed }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream `id`: same (master, id) always yields the identical sequence.
    pub fn stream(&self, id: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master);
        rng.set_stream(id);
        rng
    }
}

/// Uniform draw in the open interval (0, 1).
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}
