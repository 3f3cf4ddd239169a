use georegion::geo_grid::{GeoPoint, EARTH_RADIUS_KM};
use georegion::haversine_km;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = GeoPoint> {
    (-90.0..=90.0f64, -180.0..180.0f64).prop_map(|(lat, lon)| GeoPoint { lat, lon })
}

#[test]
fn equator_degree_and_antipode() {
    let deg = haversine_km(GeoPoint { lat: 0.0, lon: 0.0 }, GeoPoint { lat: 0.0, lon: 1.0 });
    approx::assert_relative_eq!(deg, 111.1951, max_relative = 1e-6);
    approx::assert_relative_eq!(deg, EARTH_RADIUS_KM * std::f64::consts::PI / 180.0, max_relative = 1e-12);
    let anti = haversine_km(GeoPoint { lat: 0.0, lon: -90.0 }, GeoPoint { lat: 0.0, lon: 90.0 });
    approx::assert_relative_eq!(anti, EARTH_RADIUS_KM * std::f64::consts::PI, max_relative = 1e-12);
    let poles = haversine_km(GeoPoint { lat: 90.0, lon: 0.0 }, GeoPoint { lat: -90.0, lon: 0.0 });
    approx::assert_relative_eq!(poles, anti, max_relative = 1e-12);
}

#[test]
fn meridian_arc_is_linear_in_latitude() {
    let origin = GeoPoint { lat: 0.0, lon: 10.0 };
    for step in 1..=9 {
        let lat = 10.0 * step as f64;
        let d = haversine_km(origin, GeoPoint { lat, lon: 10.0 });
        approx::assert_relative_eq!(d, EARTH_RADIUS_KM * lat.to_radians(), max_relative = 1e-12);
    }
}

proptest! {
    #[test]
    fn symmetric_and_bounded(a in point(), b in point()) {
        let ab = haversine_km(a, b);
        prop_assert_eq!(ab, haversine_km(b, a));
        prop_assert!(ab >= 0.0);
        prop_assert!(ab <= EARTH_RADIUS_KM * std::f64::consts::PI * (1.0 + 1e-12));
        prop_assert_eq!(haversine_km(a, a), 0.0);
    }

    #[test]
    fn triangle_inequality(a in point(), b in point(), c in point()) {
        let slack = 1e-9;
        prop_assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + slack);
    }
}
