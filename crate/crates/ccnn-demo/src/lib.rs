//! Placeholder; filled in once the core API settles.

pub fn placeholder() {}
