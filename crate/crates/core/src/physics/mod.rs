//! Green's function, kernel tables, incident fields and the medium model.

pub mod green;
pub mod phantom;
pub mod sources;

pub use green::{build_green_kernel, disk_mean_green, offset_table, green_point, offset_spectrum, GreenKernelTable};
pub use phantom::{contrast, contrast_from_max, phantom_xi, speed_to_xi, xi_to_speed, Bump, Phantom};
pub use sources::{incident_field, incident_field_spectral, SourceSet};
