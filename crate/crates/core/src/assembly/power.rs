/// `|t|^p` and its derivative with fast paths for small integer exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Power {
    Two,
    Three,
    Four,
    General(f64),
}

impl Power {
    pub(crate) fn new(p: f64) -> Self {
        if p == 2.0 {
            Power::Two
        } else if p == 3.0 {
            Power::Three
        } else if p == 4.0 {
            Power::Four
        } else {
            Power::General(p)
        }
    }

    #[inline(always)]
    pub(crate) fn abs_pow(self, t: f64) -> f64 {
        match self {
            Power::Two => t * t,
            Power::Three => t * t * t.abs(),
            Power::Four => {
                let t2 = t * t;
                t2 * t2
            }
            Power::General(p) => t.abs().powf(p),
        }
    }

    /// `p |t|^{p-2} t`, the derivative of `|t|^p`.
    #[inline(always)]
    pub(crate) fn derivative(self, t: f64) -> f64 {
        match self {
            Power::Two => 2.0 * t,
            Power::Three => 3.0 * t * t.abs(),
            Power::Four => 4.0 * t * t * t,
            Power::General(p) => {
                if t == 0.0 {
                    0.0
                } else {
                    p * t.abs().powf(p - 1.0) * t.signum()
                }
            }
        }
    }

    /// `p (t^2 + eta^2)^{(p-2)/2} t`; equals [`Power::derivative`] when `eta = 0`.
    #[inline(always)]
    pub(crate) fn smoothed_derivative(self, t: f64, eta: f64) -> f64 {
        match self {
            Power::General(p) if p < 2.0 && eta > 0.0 => p * (t * t + eta * eta).powf(0.5 * (p - 2.0)) * t,
            _ => self.derivative(t),
        }
    }
}
