//! Mapping between information bits and symbol frames: pilot layout,
//! optional convolutional coding, and the inverse at the receiver.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coding::{self, BlockInterleaver};
use crate::error::{invalid, IsacError, Result};
use crate::waveform::{Constellation, SymbolFrame, WaveformParams};

/// Default per-pulse pilot head (symbols at the start of pulses `p ≥ 1`).
pub const DEFAULT_PILOT_HEAD: usize = 2;

/// How bits are carried by a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFormat {
    pub constellation: Constellation,
    pub coded: bool,
    /// Interleaver width in symbols; `None` is the identity.
    pub interleaver: Option<usize>,
    pub pilot_head: usize,
    /// Seed of the pilot sequence. Distinct transmitters use distinct seeds.
    pub pilot_seed: u64,
}

impl LinkFormat {
    pub fn uncoded(constellation: Constellation, pilot_seed: u64) -> Self {
        Self {
            constellation,
            coded: false,
            interleaver: None,
            pilot_head: DEFAULT_PILOT_HEAD,
            pilot_seed,
        }
    }

    pub fn coded_qpsk(pilot_seed: u64) -> Self {
        Self {
            constellation: Constellation::Qpsk,
            coded: true,
            interleaver: None,
            pilot_head: DEFAULT_PILOT_HEAD,
            pilot_seed,
        }
    }

    pub fn validate(&self, params: &WaveformParams) -> Result<()> {
        if self.coded && self.constellation != Constellation::Qpsk {
            return Err(invalid(
                "coding",
                "coded transmission carries (systematic, parity) pairs on QPSK",
            ));
        }
        if self.pilot_head > params.symbols_per_pulse {
            return Err(invalid("pilot_head", "longer than a pulse"));
        }
        let payload = self.payload_symbols(params);
        if payload == 0 || (self.coded && payload <= coding::TAIL) {
            return Err(invalid("pulses", "frame has no room for data symbols"));
        }
        Ok(())
    }

    /// Pilot mask, column-major `Lc × P`.
    pub fn pilot_mask(&self, params: &WaveformParams) -> Vec<bool> {
        let lc = params.symbols_per_pulse;
        let head = if params.pulses > 1 { self.pilot_head } else { 0 };
        let mut mask = vec![false; lc * params.pulses];
        for p in 0..params.pulses {
            let n = if p == 0 { lc } else { head };
            mask[p * lc..p * lc + n].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    pub fn payload_symbols(&self, params: &WaveformParams) -> usize {
        self.pilot_mask(params).iter().filter(|&&m| !m).count()
    }

    /// Information bits carried by one frame.
    pub fn info_bits(&self, params: &WaveformParams) -> usize {
        let n = self.payload_symbols(params);
        if self.coded {
            n - coding::TAIL
        } else {
            n * self.constellation.bits_per_symbol()
        }
    }

    /// Deterministic pilot symbols drawn from the constellation.
    pub fn pilot_symbols(&self, count: usize) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.pilot_seed);
        let order = self.constellation.order();
        (0..count)
            .map(|_| self.constellation.point(rng.gen_range(0..order)))
            .collect()
    }

    /// Frame holding only the pilots; data positions are zero.
    pub fn pilot_frame(&self, params: &WaveformParams) -> Result<SymbolFrame> {
        let mask = self.pilot_mask(params);
        let pilots = self.pilot_symbols(mask.iter().filter(|&&m| m).count());
        let mut it = pilots.into_iter();
        let symbols = mask
            .iter()
            .map(|&m| {
                if m {
                    it.next().unwrap_or_default()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        SymbolFrame::new(
            params.symbols_per_pulse,
            params.pulses,
            symbols,
            mask,
            self.constellation,
        )
    }

    fn payload_order(&self, n: usize) -> Vec<usize> {
        match self.interleaver {
            Some(w) if w > 1 => BlockInterleaver::new(w).permutation(n),
            _ => (0..n).collect(),
        }
    }

    /// Build the transmitted frame carrying `info`.
    pub fn build(&self, info: &[u8], params: &WaveformParams) -> Result<SymbolFrame> {
        self.validate(params)?;
        let want = self.info_bits(params);
        if info.len() != want {
            return Err(IsacError::LengthMismatch {
                expected: want,
                actual: info.len(),
            });
        }
        let data: Vec<Complex64> = if self.coded {
            let cw = coding::encode(info);
            cw.systematic
                .iter()
                .zip(&cw.parity)
                .map(|(&s, &p)| self.constellation.point(((s as usize) << 1) | p as usize))
                .collect()
        } else {
            crate::waveform::map_bits(info, self.constellation)?
        };
        let order = self.payload_order(data.len());
        let mask = self.pilot_mask(params);
        let pilots = self.pilot_symbols(mask.iter().filter(|&&m| m).count());
        let mut symbols = Vec::with_capacity(mask.len());
        let (mut ip, mut id) = (0, 0);
        for &m in &mask {
            if m {
                symbols.push(pilots[ip]);
                ip += 1;
            } else {
                symbols.push(data[order[id]]);
                id += 1;
            }
        }
        SymbolFrame::new(
            params.symbols_per_pulse,
            params.pulses,
            symbols,
            mask,
            self.constellation,
        )
    }

    /// Random frame plus the information bits it carries.
    pub fn random<R: Rng + ?Sized>(
        &self,
        params: &WaveformParams,
        rng: &mut R,
    ) -> Result<(SymbolFrame, Vec<u8>)> {
        let bits: Vec<u8> = (0..self.info_bits(params))
            .map(|_| rng.gen_range(0..2u8))
            .collect();
        let frame = self.build(&bits, params)?;
        Ok((frame, bits))
    }

    /// Data-position soft symbols (equalized) in transmission order.
    fn gather(&self, equalized: &[Complex64], params: &WaveformParams) -> Vec<Complex64> {
        let mask = self.pilot_mask(params);
        let data: Vec<Complex64> = equalized
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| !m)
            .map(|(v, _)| *v)
            .collect();
        let order = self.payload_order(data.len());
        let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
        for (k, &i) in order.iter().enumerate() {
            out[i] = data[k];
        }
        out
    }

    /// Recover information bits from equalized soft symbols (column-major,
    /// whole frame). `noise_var` is the post-equalization noise variance used
    /// to scale LLRs.
    pub fn recover(
        &self,
        equalized: &[Complex64],
        noise_var: f64,
        params: &WaveformParams,
    ) -> Result<Vec<u8>> {
        let want = params.symbols_per_pulse * params.pulses;
        if equalized.len() != want {
            return Err(IsacError::LengthMismatch {
                expected: want,
                actual: equalized.len(),
            });
        }
        let data = self.gather(equalized, params);
        if self.coded {
            let nv = if noise_var.is_finite() && noise_var > 0.0 {
                noise_var
            } else {
                1e-12
            };
            let mut ls = Vec::with_capacity(data.len());
            let mut lp = Vec::with_capacity(data.len());
            let mut buf = Vec::with_capacity(2);
            for &y in &data {
                buf.clear();
                self.constellation.llrs(y, nv, &mut buf);
                ls.push(buf[0]);
                lp.push(buf[1]);
            }
            coding::viterbi_decode(&ls, &lp)
        } else {
            Ok(crate::waveform::demap(&data, self.constellation))
        }
    }
}

/// Random uncoded frame with a per-pulse pilot head, for tests and
/// synthetic scenarios.
pub fn random_frame<R: Rng + ?Sized>(
    params: &WaveformParams,
    constellation: Constellation,
    pilot_head: usize,
    pilot_seed: u64,
    rng: &mut R,
) -> SymbolFrame {
    let fmt = LinkFormat {
        pilot_head,
        ..LinkFormat::uncoded(constellation, pilot_seed)
    };
    fmt.random(params, rng).expect("valid test frame").0
}
