//! Room geometry: positions, candidate wall planes for the reflecting surface,
//! and the irradiance angles and path lengths the channel model consumes.
//!
//! The LED boresight is fixed straight down (`-z`). All reflecting elements
//! share the surface's central point `q` for distance and angle purposes.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Margin kept from the wall edges so that the strict inequalities of the
/// plane definitions hold for every searched point.
pub const WALL_MARGIN: f64 = 1e-6;

/// A point or direction in room coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn sub(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        self.sub(other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Axis-aligned room extent, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl RoomBounds {
    pub fn new(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> Self {
        RoomBounds {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            z_min: z.0,
            z_max: z.1,
        }
    }

    pub fn is_valid(&self) -> bool {
        let finite = [
            self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        finite && self.x_min < self.x_max && self.y_min < self.y_max && self.z_min < self.z_max
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec3) -> bool {
        p.is_finite()
            && (self.x_min..=self.x_max).contains(&p.x)
            && (self.y_min..=self.y_max).contains(&p.y)
            && (self.z_min..=self.z_max).contains(&p.z)
    }

    pub fn wall(&self, tag: PlaneTag) -> WallPlane {
        let fixed_coordinate = match tag {
            PlaneTag::H1 => self.x_min,
            PlaneTag::H2 => self.x_max,
            PlaneTag::H3 => self.y_min,
            PlaneTag::H4 => self.y_max,
        };
        WallPlane {
            tag,
            fixed_coordinate,
        }
    }
}

/// The four vertical walls on which the reflecting surface may be mounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlaneTag {
    /// `x = x_min`
    H1,
    /// `x = x_max`
    H2,
    /// `y = y_min`
    H3,
    /// `y = y_max`
    H4,
}

impl PlaneTag {
    pub const ALL: [PlaneTag; 4] = [PlaneTag::H1, PlaneTag::H2, PlaneTag::H3, PlaneTag::H4];

    pub fn name(self) -> &'static str {
        match self {
            PlaneTag::H1 => "H1",
            PlaneTag::H2 => "H2",
            PlaneTag::H3 => "H3",
            PlaneTag::H4 => "H4",
        }
    }
}

impl fmt::Display for PlaneTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPlane {
    pub tag: PlaneTag,
    pub fixed_coordinate: f64,
}

impl WallPlane {
    /// Open ranges of the two free coordinates `(u, v)`. The second free
    /// coordinate is always `z`; the first is `y` for H1/H2 and `x` for H3/H4.
    pub fn free_ranges(&self, room: &RoomBounds) -> ((f64, f64), (f64, f64)) {
        let first = match self.tag {
            PlaneTag::H1 | PlaneTag::H2 => (room.y_min, room.y_max),
            PlaneTag::H3 | PlaneTag::H4 => (room.x_min, room.x_max),
        };
        (first, (room.z_min, room.z_max))
    }

    /// Free coordinates of a point lying on this plane.
    pub fn free_coordinates(&self, q: Vec3) -> (f64, f64) {
        match self.tag {
            PlaneTag::H1 | PlaneTag::H2 => (q.y, q.z),
            PlaneTag::H3 | PlaneTag::H4 => (q.x, q.z),
        }
    }

    /// Center of the wall.
    pub fn center(&self, room: &RoomBounds) -> Vec3 {
        let ((u0, u1), (v0, v1)) = self.free_ranges(room);
        self.insert(0.5 * (u0 + u1), 0.5 * (v0 + v1))
    }

    fn insert(&self, u: f64, v: f64) -> Vec3 {
        match self.tag {
            PlaneTag::H1 | PlaneTag::H2 => Vec3::new(self.fixed_coordinate, u, v),
            PlaneTag::H3 | PlaneTag::H4 => Vec3::new(u, self.fixed_coordinate, v),
        }
    }
}

/// Returns the unique wall plane whose equality and strict-inequality
/// conditions `q` satisfies.
pub fn plane_membership(q: Vec3, room: &RoomBounds) -> Result<WallPlane> {
    let open = |v: f64, lo: f64, hi: f64| lo < v && v < hi;
    let not_on_plane = Error::NotOnAnyPlane {
        x: q.x,
        y: q.y,
        z: q.z,
    };
    if !q.is_finite() || !open(q.z, room.z_min, room.z_max) {
        return Err(not_on_plane);
    }
    let in_y = open(q.y, room.y_min, room.y_max);
    let in_x = open(q.x, room.x_min, room.x_max);
    let tag = if q.x == room.x_min && in_y {
        PlaneTag::H1
    } else if q.x == room.x_max && in_y {
        PlaneTag::H2
    } else if q.y == room.y_min && in_x {
        PlaneTag::H3
    } else if q.y == room.y_max && in_x {
        PlaneTag::H4
    } else {
        return Err(not_on_plane);
    };
    Ok(room.wall(tag))
}

/// Maps free plane coordinates `(u, v)` to a room point on `plane`.
pub fn project_to_plane(u: f64, v: f64, plane: WallPlane, room: &RoomBounds) -> Result<Vec3> {
    let ((u0, u1), (v0, v1)) = plane.free_ranges(room);
    let inside = u.is_finite() && v.is_finite() && u0 < u && u < u1 && v0 < v && v < v1;
    if !inside {
        return Err(Error::OutOfPlaneRange { u, v });
    }
    Ok(plane.insert(u, v))
}

const BORESIGHT: Vec3 = Vec3::new(0.0, 0.0, -1.0);

fn angle_from_boresight(from: Vec3, to: Vec3) -> Result<f64> {
    let dir = to.sub(from);
    let len = dir.norm();
    if len == 0.0 || !len.is_finite() {
        return Err(Error::DegenerateGeometry(format!(
            "coincident points at {from}"
        )));
    }
    Ok((dir.dot(BORESIGHT) / len).clamp(-1.0, 1.0).acos())
}

/// Irradiance angle of the direct path: angle between the LED boresight and
/// the LED-to-user direction.
pub fn irradiance_angle_los(led: Vec3, user: Vec3) -> Result<f64> {
    angle_from_boresight(led, user)
}

/// Irradiance angle of the reflected path: angle between the LED boresight
/// and the LED-to-surface direction.
pub fn irradiance_angle_oirs(led: Vec3, q: Vec3) -> Result<f64> {
    angle_from_boresight(led, q)
}

/// Path lengths for one surface placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Distances {
    /// `direct[l][k]`: LED `l` to user `k`.
    pub direct: Vec<Vec<f64>>,
    /// `led_to_surface[l]`: LED `l` to the surface center.
    pub led_to_surface: Vec<f64>,
    /// `surface_to_user[k]`: surface center to user `k`.
    pub surface_to_user: Vec<f64>,
}

pub fn distances(leds: &[Vec3], users: &[Vec3], q: Vec3) -> Distances {
    Distances {
        direct: leds
            .iter()
            .map(|l| users.iter().map(|u| l.distance(*u)).collect())
            .collect(),
        led_to_surface: leds.iter().map(|l| l.distance(q)).collect(),
        surface_to_user: users.iter().map(|u| q.distance(*u)).collect(),
    }
}

pub fn deg_to_rad(deg: f64) -> f64 {
    deg * PI / 180.0
}
