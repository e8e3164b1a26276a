use rail_core::runtime::live::Robot;
use rail_core::runtime::TickRecord;

/// How the simulated joints respond to commands.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RobotModel {
    /// Joint state becomes the command immediately.
    #[default]
    Ideal,
    /// First-order lag with time constant `tau` seconds.
    Lag { tau: f64 },
}

impl RobotModel {
    pub fn tau(self) -> Option<f64> {
        match self {
            RobotModel::Ideal => None,
            RobotModel::Lag { tau } => Some(tau),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRobot {
    model: RobotModel,
    state: Vec<f64>,
}

impl SimulatedRobot {
    pub fn new(model: RobotModel, initial: Vec<f64>) -> Self {
        Self { model, state: initial }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// Applies `command` held over the control period `dt`.
    pub fn apply(&mut self, command: &[f64], dt: f64) {
        match self.model {
            RobotModel::Ideal => self.state.copy_from_slice(command),
            RobotModel::Lag { tau } => {
                let gain = 1.0 - (-dt / tau).exp();
                for (s, c) in self.state.iter_mut().zip(command) {
                    *s += gain * (c - *s);
                }
            }
        }
    }
}

/// Adapter for the threaded executive: applies command ticks held for one
/// control period, ignores idle ticks.
#[derive(Debug, Clone)]
pub struct LiveRobot {
    pub robot: SimulatedRobot,
    pub period: f64,
}

impl Robot for LiveRobot {
    fn joint_positions(&mut self) -> Vec<f64> {
        self.robot.state.clone()
    }

    fn apply(&mut self, record: &TickRecord) {
        if record.is_command() {
            self.robot.apply(&record.position, self.period);
        }
    }
}
