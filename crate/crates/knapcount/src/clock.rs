//! Stage stopwatch with an optional wall-clock budget. wasm32 has no clock,
//! so there every reading is zero and budgets never trip.

#[cfg(not(target_arch = "wasm32"))]
mod imp {
    use std::time::Instant;

    #[derive(Clone, Copy)]
    pub struct Mark(Instant);

    impl Mark {
        pub fn now() -> Mark {
            Mark(Instant::now())
        }

        pub fn ms_since(&self, earlier: &Mark) -> u64 {
            (self.0 - earlier.0).as_millis() as u64
        }
    }
}

#[cfg(target_arch = "wasm32")]
mod imp {
    #[derive(Clone, Copy)]
    pub struct Mark;

    impl Mark {
        pub fn now() -> Mark {
            Mark
        }

        pub fn ms_since(&self, _earlier: &Mark) -> u64 {
            0
        }
    }
}

use imp::Mark;

pub struct Clock {
    start: Mark,
    mark: Mark,
    budget: Option<u64>,
}

impl Clock {
    pub fn new(budget: Option<u64>) -> Clock {
        let now = Mark::now();
        Clock { start: now, mark: now, budget }
    }

    /// Milliseconds since the previous lap.
    pub fn lap(&mut self) -> u64 {
        let now = Mark::now();
        let ms = now.ms_since(&self.mark);
        self.mark = now;
        ms
    }

    pub fn total(&self) -> u64 {
        Mark::now().ms_since(&self.start)
    }

    pub fn over(&self) -> bool {
        self.budget.is_some_and(|b| self.total() > b)
    }
}
