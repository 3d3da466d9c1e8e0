//! Slot-level memory model and a counting global allocator.
//!
//! A slot is one `f64`. The model counts the parameter-sized vectors each
//! optimizer keeps alive at its peak, plus a constant `C` for index
//! buffers, seeds and per-step coefficients that do not scale with d.

use std::alloc::{GlobalAlloc, Layout, System};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use crate::error::{Result, ZoError};
use crate::optimizers::OptimizerKind;

/// Constant overhead C in slots (256 KiB).
pub const OVERHEAD_SLOTS: u64 = 32 * 1024;

/// How the MeZO-SVRG anchor is accounted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AccountingMode {
    /// θ, θ̄ and a stored anchor gradient g.
    #[default]
    StoreG,
    /// θ and θ̄; g is regenerated from θ̄ when needed.
    RecomputeG,
    /// θ, θ̄, g and both minibatch estimates held densely.
    NaiveSvrg,
}

impl AccountingMode {
    pub const ALL: [AccountingMode; 3] = [Self::StoreG, Self::RecomputeG, Self::NaiveSvrg];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::StoreG => "store_g",
            Self::RecomputeG => "recompute_g",
            Self::NaiveSvrg => "naive_svrg",
        }
    }
}

impl fmt::Display for AccountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccountingMode {
    type Err = ZoError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ZoError::Config(format!("unknown accounting mode '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryModel {
    pub param_slots: u64,
    pub extra_slots: u64,
    pub overhead: u64,
}

impl MemoryModel {
    pub fn peak_slots(&self) -> u64 {
        self.param_slots + self.extra_slots + self.overhead
    }

    /// Peak in multiples of the parameter vector, ignoring C.
    pub fn ratio(&self) -> u64 {
        (self.param_slots + self.extra_slots) / self.param_slots.max(1)
    }
}

/// Modeled peak memory of `kind` at dimension `d`.
///
/// | optimizer | mode | vectors |
/// |---|---|---|
/// | MeZO | any | θ |
/// | MeZO-SVRG | store_g | θ, θ̄, g |
/// | MeZO-SVRG | recompute_g | θ, θ̄ |
/// | MeZO-SVRG | naive_svrg | θ, θ̄, g, ĝ, ḡ |
/// | ZO-SVRG | any | θ, θ̄, g, ĝ, ḡ |
/// | FO-SGD | any | θ, ∇f |
pub fn account_memory(kind: OptimizerKind, mode: AccountingMode, d: u64) -> Result<MemoryModel> {
    if d == 0 {
        return Err(ZoError::Config("dimension must be positive".into()));
    }
    let extra = match (kind, mode) {
        (OptimizerKind::Mezo, _) => 0,
        (OptimizerKind::MezoSvrg, AccountingMode::StoreG) => 2,
        (OptimizerKind::MezoSvrg, AccountingMode::RecomputeG) => 1,
        (OptimizerKind::MezoSvrg, AccountingMode::NaiveSvrg) | (OptimizerKind::ZoSvrg, _) => 4,
        (OptimizerKind::FoSgd, _) => 1,
    };
    Ok(MemoryModel {
        param_slots: d,
        extra_slots: extra * d,
        overhead: OVERHEAD_SLOTS,
    })
}

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static ACTIVE: AtomicBool = AtomicBool::new(false);

/// Global allocator wrapper that tracks live and peak heap bytes.
///
/// ```ignore
/// #[global_allocator]
/// static ALLOC: zovr::harness::accounting::TrackingAllocator = zovr::harness::accounting::TrackingAllocator;
/// ```
pub struct TrackingAllocator;

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            grow(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            grow(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
            grow(new_size);
        }
        p
    }
}

fn grow(bytes: usize) {
    ACTIVE.store(true, Ordering::Relaxed);
    let now = CURRENT.fetch_add(bytes, Ordering::Relaxed) + bytes;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

/// Whether [`TrackingAllocator`] is the global allocator of this process.
pub fn tracking_active() -> bool {
    ACTIVE.load(Ordering::Relaxed)
}

pub fn live_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Resets the peak to the current live size.
pub fn reset_peak() {
    PEAK.store(CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
}

/// Runs `f` and returns its result with the peak heap growth in slots
/// above the live size at entry. `None` without the tracking allocator.
/// Concurrent allocations on other threads are included.
pub fn measure_peak_slots<T>(f: impl FnOnce() -> T) -> (T, Option<u64>) {
    let base = live_bytes();
    reset_peak();
    let out = f();
    let grown = peak_bytes().saturating_sub(base);
    let slots = tracking_active().then(|| grown.div_ceil(std::mem::size_of::<f64>()) as u64);
    (out, slots)
}
