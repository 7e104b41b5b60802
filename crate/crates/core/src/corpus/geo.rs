use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used for all great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// Latitude in [-90, 90], longitude in (-180, 180].
    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && self.lon > -180.0 && self.lon <= 180.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidCoordinate {
                lat: self.lat,
                lon: self.lon,
            })
        }
    }
}

/// Great-circle distance in kilometres (haversine form).
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    // rounding can push h a hair past 1 for antipodes
    let c = 2.0 * h.sqrt().min(1.0).asin();
    Ok(EARTH_RADIUS_KM * c)
}

/// Point reached by travelling `distance_km` from `origin` along `bearing_deg`
/// (clockwise from north) on the sphere.
pub fn destination(origin: GeoPoint, bearing_deg: f64, distance_km: f64) -> GeoPoint {
    let delta = distance_km / EARTH_RADIUS_KM;
    let theta = bearing_deg.to_radians();
    let phi1 = origin.lat.to_radians();
    let lambda1 = origin.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    let mut lon = lambda2.to_degrees();
    while lon <= -180.0 {
        lon += 360.0;
    }
    while lon > 180.0 {
        lon -= 360.0;
    }
    GeoPoint::new(phi2.to_degrees(), lon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityAnchor {
    pub name: String,
    #[serde(rename = "lon")]
    pub longitude: f64,
    #[serde(rename = "lat")]
    pub latitude: f64,
}

impl CityAnchor {
    pub fn new(name: impl Into<String>, longitude: f64, latitude: f64) -> Self {
        Self {
            name: name.into(),
            longitude,
            latitude,
        }
    }

    pub fn point(&self) -> GeoPoint {
        GeoPoint::new(self.latitude, self.longitude)
    }
}

// (name, longitude, latitude)
const DEFAULT_ANCHORS: [(&str, f64, f64); 16] = [
    ("London", -0.12776, 51.50735),
    ("New York", -74.0059, 40.71278),
    ("Boston", -71.0589, 42.36008),
    ("Paris", 2.352222, 48.85661),
    ("Toronto", -79.3832, 43.65323),
    ("Barcelona", 2.173403, 41.38506),
    ("Tokyo", 139.6917, 35.68949),
    ("San Francisco", -122.419, 37.77493),
    ("Hong Kong", 114.1095, 22.39643),
    ("Zurich", 8.541694, 47.37689),
    ("Seoul", 126.978, 37.56654),
    ("Beijing", 116.4074, 39.90421),
    ("Bangkok", 100.5018, 13.75633),
    ("Singapore", 103.8198, 1.352083),
    ("Kuala Lumpur", 101.6869, 3.139003),
    ("New Delhi", 77.20902, 28.61394),
];

/// The sixteen built-in city anchors.
pub fn default_anchors() -> Vec<CityAnchor> {
    DEFAULT_ANCHORS
        .iter()
        .map(|&(name, lon, lat)| CityAnchor::new(name, lon, lat))
        .collect()
}

pub fn validate_anchors(anchors: &[CityAnchor]) -> Result<()> {
    let mut seen = HashSet::new();
    for anchor in anchors {
        anchor.point().validate()?;
        if !seen.insert(anchor.name.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "duplicate anchor name {:?}",
                anchor.name
            )));
        }
    }
    Ok(())
}

/// Reads an anchor table from a JSON array of `{"name", "lon", "lat"}` objects.
pub fn load_anchors(path: &Path) -> Result<Vec<CityAnchor>> {
    let text = std::fs::read_to_string(path)?;
    let anchors: Vec<CityAnchor> = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    validate_anchors(&anchors)?;
    Ok(anchors)
}
