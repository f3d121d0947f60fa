//! Atmosphere, ephemerides, eclipse geometry, geomagnetic field and the Earth
//! radiation grid.

pub mod albedo;
pub mod atmosphere;
pub mod ephemeris;
pub mod magnetic;
pub mod shadow;

pub use albedo::{albedo_emissivity, AlbedoCoefficients, AlbedoGrid, AlbedoSettings, ElementIrradiance};
pub use atmosphere::{density, AtmosphereModel, DensitySample};
pub use ephemeris::{AnalyticEphemeris, Ephemeris, FrozenEphemeris};
pub use magnetic::{magnetic_field, DipoleField};
pub use shadow::{shadow_factor, ShadowGeometry};
