//! Placeholder; full CLI lands with the command implementations.
pub fn run_from_env() -> i32 {
    0
}
