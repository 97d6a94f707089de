use bitflags::bitflags;

bitflags! {
    /// Diagnostic markers attached to estimates. A flagged value is still
    /// usable; the flag records which fallback or clamp produced it.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct Flags: u32 {
        /// A negative variance was clamped to zero.
        const VARIANCE_CLAMPED = 1 << 0;
        /// The Gram matrix failed the condition gate and was ridge-regularized.
        const RIDGE = 1 << 1;
        /// Direct GREG could not be computed; Hájek mean substituted.
        const HAJEK_FALLBACK = 1 << 2;
        /// A composition weight was clamped into [0, 1].
        const LAMBDA_CLAMPED = 1 << 3;
        /// No sampled units in the domain.
        const EMPTY_DOMAIN = 1 << 4;
        /// The GW estimator returned a negative value.
        const NEGATIVE_MSE = 1 << 5;
        /// More than 20% of bootstrap replicates were missing.
        const BOOTSTRAP_UNRELIABLE = 1 << 6;
        /// GVF slope undefined (all domain sizes equal); gamma set to 0.
        const GVF_FLAT = 1 << 7;
        /// Fewer than two sampled units; variance undefined.
        const VARIANCE_UNDEFINED = 1 << 8;
    }
}

impl Flags {
    /// Names of the set flags joined with `|`, or an empty string.
    pub fn label(&self) -> String {
        self.iter_names().map(|(name, _)| name).collect::<Vec<_>>().join("|")
    }
}
