//! Per-epoch validation records and their CSV form.

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Validation pixel MSE (Eq.-4-style, per-pixel units).
    pub mse: f64,
    /// Validation perceptual loss; NaN when no extractor is attached.
    pub vgg: f64,
    /// Wasserstein surrogate, unnormalized; NaN for critic-free variants.
    pub w_raw: f64,
    /// Surrogate divided by the patch pixel count.
    pub w_norm: f64,
    /// Wall time of the epoch (train + validate), seconds.
    pub seconds: f64,
}

/// Instrumentation counters over a whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainCounters {
    pub critic_updates: usize,
    pub generator_updates: usize,
    /// Probability clampings observed in the plain-GAN losses.
    pub gan_clamp_events: usize,
}

/// Ordered per-epoch records plus run counters.
#[derive(Debug, Clone, Default)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub counters: TrainCounters,
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.9e}")
    }
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mse,vgg,w_raw,w_norm,seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch,
                fmt_value(r.mse),
                fmt_value(r.vgg),
                fmt_value(r.w_raw),
                fmt_value(r.w_norm),
                fmt_value(r.seconds),
            ));
        }
        out
    }

    /// CSV with the wall-time column removed: the seed-reproducible part.
    pub fn to_csv_deterministic(&self) -> String {
        let mut out = String::from("epoch,mse,vgg,w_raw,w_norm\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                fmt_value(r.mse),
                fmt_value(r.vgg),
                fmt_value(r.w_raw),
                fmt_value(r.w_norm),
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<History, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty history csv")?;
        if header != "epoch,mse,vgg,w_raw,w_norm,seconds" {
            return Err(format!("unexpected header '{header}'"));
        }
        let mut records = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 6 {
                return Err(format!("bad row '{line}'"));
            }
            let f = |s: &str| -> Result<f64, String> {
                if s == "nan" {
                    Ok(f64::NAN)
                } else {
                    s.parse::<f64>().map_err(|e| format!("'{s}': {e}"))
                }
            };
            records.push(EpochRecord {
                epoch: parts[0].parse().map_err(|e| format!("epoch: {e}"))?,
                mse: f(parts[1])?,
                vgg: f(parts[2])?,
                w_raw: f(parts[3])?,
                w_norm: f(parts[4])?,
                seconds: f(parts[5])?,
            });
        }
        Ok(History { records, counters: TrainCounters::default() })
    }

    /// Moving average of the raw Wasserstein surrogate over `window` epochs,
    /// evaluated at `epoch` (1-based); NaN when out of range.
    pub fn w_moving_average(&self, epoch: usize, window: usize) -> f64 {
        if epoch < window || epoch > self.records.len() {
            return f64::NAN;
        }
        let slice = &self.records[epoch - window..epoch];
        slice.iter().map(|r| r.w_raw).sum::<f64>() / window as f64
    }
}
