//! Physical constants used as configuration defaults.

/// Earth gravitational parameter, m³/s².
pub const MU_EARTH: f64 = 3.986004418e14;
/// Earth equatorial reference radius, m.
pub const R_EARTH: f64 = 6_378_137.0;
/// Mean Earth radius, m (albedo grid sphere).
pub const R_EARTH_MEAN: f64 = 6_371_008.8;
/// Earth rotation rate, rad/s.
pub const OMEGA_EARTH: f64 = 7.292_115_146_706_979e-5;
/// Greenwich rotation angle at the J2000 reference epoch, rad.
pub const EARTH_ANGLE_J2000: f64 = 4.894_961_212_823_756;

pub const MU_SUN: f64 = 1.327_124_400_18e20;
pub const MU_MOON: f64 = 4.902_800_066e12;
pub const R_SUN: f64 = 6.957e8;

/// Astronomical unit, m.
pub const AU: f64 = 1.495_978_707e11;
/// Speed of light, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;
/// Total solar irradiance at 1 AU, W/m².
pub const SOLAR_IRRADIANCE: f64 = 1361.0;
/// Solar radiation pressure at 1 AU, N/m².
pub const P_SUN: f64 = SOLAR_IRRADIANCE / C_LIGHT;
/// Equatorial surface field of the geomagnetic dipole, T.
pub const B0_DIPOLE: f64 = 3.12e-5;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const DAYS_PER_CENTURY: f64 = 36_525.0;
