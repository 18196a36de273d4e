//! QRS simulation on a biventricular phantom: Eikonal activation, pseudo-ECG
//! potentials at body-surface electrodes, lead derivation and comparison.

pub mod compare;
pub mod eikonal;
pub mod leads;
pub mod phantom;
pub mod signal;

pub use compare::{compare_ecgs, dtw, dtw_raw, qrs_duration, rs_ratio, Dtw, EcgComparison, DEFAULT_QRS_FRACTION};
pub use eikonal::{solve_eikonal, ActivationMap};
pub use leads::{derive_leads, EcgTrace, ECG_HEADER, LEAD_NAMES};
pub use phantom::{Fiber, HeartPhantom, PhantomSpec, Shell, DEFAULT_ROOT_POINTS};
pub use signal::{pseudo_ecg, pseudo_ecg_frame, pseudo_ecg_multi, simulate_ecg, smoothstep, transmembrane, SimConfig};
