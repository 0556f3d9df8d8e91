//! Discrete PID controller used for the bootstrap phase and the PID cloud
//! scenario. Positional form, backward-difference derivative on the error,
//! clamped output with conditional-integration anti-windup.

#[derive(Debug, Clone, Copy)]
pub struct Pid {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Sampling period, s.
    pub ts: f64,
    pub out_min: f64,
    pub out_max: f64,
    integral: f64,
    prev_error: f64,
}

impl Pid {
    pub fn new(kp: f64, ki: f64, kd: f64, ts: f64, out_min: f64, out_max: f64) -> Self {
        assert!(ts > 0.0, "sampling period must be positive");
        assert!(out_min < out_max, "output limits must be ordered");
        Self {
            kp,
            ki,
            kd,
            ts,
            out_min,
            out_max,
            integral: 0.0,
            prev_error: 0.0,
        }
    }

    /// One controller step. The integral is only accumulated while the
    /// unclamped command stays inside the output limits.
    pub fn step(&mut self, reference: f64, measurement: f64) -> f64 {
        let error = reference - measurement;
        let candidate_integral = self.integral + error * self.ts;
        let raw = self.kp * error
            + self.ki * candidate_integral
            + self.kd * (error - self.prev_error) / self.ts;
        self.prev_error = error;
        if raw >= self.out_min && raw <= self.out_max {
            self.integral = candidate_integral;
            raw
        } else {
            raw.clamp(self.out_min, self.out_max)
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = 0.0;
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }
}
