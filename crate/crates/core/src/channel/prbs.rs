/// Maximal-length 12-bit linear feedback shift register,
/// x¹² + x⁶ + x⁴ + x + 1, period 4095.
#[derive(Debug, Clone)]
pub struct Prbs12 {
    state: u16,
}

impl Prbs12 {
    pub const PERIOD: usize = 4095;

    /// Starts from a nonzero 12-bit seed; zero is replaced by 1.
    pub fn new(seed: u16) -> Self {
        let state = seed & 0x0fff;
        Self {
            state: if state == 0 { 1 } else { state },
        }
    }

    pub fn state(&self) -> u16 {
        self.state
    }

    pub fn next_bit(&mut self) -> bool {
        let s = self.state;
        let bit = ((s >> 11) ^ (s >> 5) ^ (s >> 3) ^ s) & 1;
        self.state = ((s << 1) | bit) & 0x0fff;
        bit == 1
    }

    /// One full period of output bits.
    pub fn period_bits(seed: u16) -> Vec<bool> {
        let mut g = Self::new(seed);
        (0..Self::PERIOD).map(|_| g.next_bit()).collect()
    }
}
