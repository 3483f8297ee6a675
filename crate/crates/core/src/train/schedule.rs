use super::Schedule;

/// Learning rate for optimizer step `step` (1-based) out of `total`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub kind: Schedule,
}

impl LrSchedule {
    pub fn new(peak: f64, warmup_ratio: f64, total_steps: usize, kind: Schedule) -> Self {
        let warmup_steps = ((warmup_ratio * total_steps as f64).ceil() as usize).min(total_steps);
        Self {
            peak,
            warmup_steps,
            total_steps,
            kind,
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        let (w, total) = (self.warmup_steps, self.total_steps);
        if step <= w {
            return if w == 0 {
                self.peak
            } else {
                self.peak * step as f64 / w as f64
            };
        }
        match self.kind {
            Schedule::Constant => self.peak,
            Schedule::Cosine => {
                let progress = ((step - w) as f64 / (total - w).max(1) as f64).min(1.0);
                self.peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}
