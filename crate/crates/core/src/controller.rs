use crate::highway_env::WorldState;
use crate::vehicle_dynamics::ControlAction;

/// Anything that can drive the ego vehicle. Outputs are clamped to the ego
/// limits before they reach the plant, whatever the implementation returns.
pub trait Controller: Send {
    fn name(&self) -> String;

    fn control(&mut self, world: &WorldState) -> ControlAction;

    /// Drops any cached plan or internal state.
    fn reset(&mut self) {}

    fn boxed_clone(&self) -> Box<dyn Controller>;

    /// Planning passes since the last reset that found no constraint-feasible
    /// velocity. Controllers without a planner report zero.
    fn infeasible_plans(&self) -> usize {
        0
    }
}

impl Clone for Box<dyn Controller> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}
