//! Command-line entry points. Placeholder while the library grows.

pub fn run() -> i32 {
    0
}
