//! Optical wireless channel between the ceiling access points and a handheld
//! device: Lambertian line-of-sight gains, a single-bounce wall reflection
//! term, and the uplink reference-signal SNR.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_matrix, ue_normal, Pose, Vec3};

/// Room, access-point lattice and optical front-end parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomLayout {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// APs per side of the square ceiling lattice; ignored when `ap_xy` is set.
    pub ap_grid: usize,
    /// Explicit AP ceiling coordinates `[x, y]`.
    pub ap_xy: Option<Vec<[f64; 2]>>,
    pub led_half_power_angle: f64,
    pub pd_area: f64,
    pub pd_fov: f64,
    pub pd_responsivity: f64,
    pub optical_filter_gain: f64,
    pub concentrator_gain: f64,
    /// Noise power spectral density, A^2/Hz.
    pub noise_psd: f64,
    pub bandwidth: f64,
    pub dc_bias: f64,
    pub wall_reflectance: f64,
    pub nlos_enabled: bool,
    pub nlos_patch_size: f64,
}

impl Default for RoomLayout {
    fn default() -> Self {
        RoomLayout {
            length: 5.0,
            width: 5.0,
            height: 3.0,
            ap_grid: 4,
            ap_xy: None,
            led_half_power_angle: 60.0,
            pd_area: 1e-4,
            pd_fov: 85.0,
            pd_responsivity: 1.0,
            optical_filter_gain: 1.0,
            concentrator_gain: 1.0,
            noise_psd: 1e-21,
            bandwidth: 20e6,
            dc_bias: 0.5,
            wall_reflectance: 0.8,
            nlos_enabled: false,
            nlos_patch_size: 0.25,
        }
    }
}

impl RoomLayout {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("width", self.width),
            ("height", self.height),
            ("pd_area", self.pd_area),
            ("noise_psd", self.noise_psd),
            ("bandwidth", self.bandwidth),
            ("nlos_patch_size", self.nlos_patch_size),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("layout.{name} must be positive, got {v}")));
            }
        }
        if !(self.led_half_power_angle > 0.0 && self.led_half_power_angle < 90.0) {
            return Err(Error::invalid("layout.led_half_power_angle must lie in (0, 90) deg"));
        }
        if !(self.pd_fov > 0.0 && self.pd_fov <= 90.0) {
            return Err(Error::invalid("layout.pd_fov must lie in (0, 90] deg"));
        }
        if !(0.0..1.0).contains(&self.wall_reflectance) {
            return Err(Error::invalid("layout.wall_reflectance must lie in [0, 1)"));
        }
        match &self.ap_xy {
            Some(xy) => {
                if xy.is_empty() {
                    return Err(Error::invalid("layout.ap_xy must list at least one AP"));
                }
                for p in xy {
                    if !(0.0..=self.length).contains(&p[0]) || !(0.0..=self.width).contains(&p[1]) {
                        return Err(Error::invalid(format!("AP at {p:?} is outside the ceiling")));
                    }
                }
            }
            None if self.ap_grid == 0 => {
                return Err(Error::invalid("layout.ap_grid must be at least 1"))
            }
            None => {}
        }
        Ok(())
    }

    pub fn num_aps(&self) -> usize {
        match &self.ap_xy {
            Some(xy) => xy.len(),
            None => self.ap_grid * self.ap_grid,
        }
    }

    /// AP positions on the ceiling, row-major over the lattice.
    pub fn ap_positions(&self) -> Vec<Vec3> {
        match &self.ap_xy {
            Some(xy) => xy.iter().map(|p| Vec3::new(p[0], p[1], self.height)).collect(),
            None => {
                let n = self.ap_grid;
                let (sx, sy) = (self.length / n as f64, self.width / n as f64);
                let mut out = Vec::with_capacity(n * n);
                for j in 0..n {
                    for i in 0..n {
                        out.push(Vec3::new(
                            (i as f64 + 0.5) * sx,
                            (j as f64 + 0.5) * sy,
                            self.height,
                        ));
                    }
                }
                out
            }
        }
    }

    pub fn ap_normal(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, -1.0)
    }

    pub fn lambertian_order(&self) -> f64 {
        lambertian_order(self.led_half_power_angle)
    }

    fn front_end(&self) -> FrontEnd {
        FrontEnd {
            order: self.lambertian_order(),
            pd_area: self.pd_area,
            fov: self.pd_fov,
            responsivity: self.pd_responsivity,
            filter_gain: self.optical_filter_gain,
            conc_gain: self.concentrator_gain,
        }
    }

    /// True when the position lies in the closed room box.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0.0..=self.length).contains(&p.x)
            && (0.0..=self.width).contains(&p.y)
            && (0.0..=self.height).contains(&p.z)
    }

    /// Clamps a position into the room box.
    pub fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(0.0, self.length),
            p.y.clamp(0.0, self.width),
            p.z.clamp(0.0, self.height),
        )
    }
}

/// Where the LED/PD pair sits on the device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceGeometry {
    /// Offset of the optical front end from the hand position along the
    /// device `+y` axis in the screen plane, m.
    pub screen_offset: f64,
}

impl Default for DeviceGeometry {
    fn default() -> Self {
        DeviceGeometry {
            screen_offset: 0.06,
        }
    }
}

impl DeviceGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.screen_offset.abs() < 0.2) {
            return Err(Error::invalid("device.screen_offset magnitude must be below 0.2 m"));
        }
        Ok(())
    }

    /// Position and normal of the device front end for a pose.
    pub fn front_end(&self, pose: &Pose) -> (Vec3, Vec3) {
        let r = rotation_matrix(pose.alpha, pose.beta, pose.gamma);
        let pos = pose.position() + r * Vec3::new(0.0, self.screen_offset, 0.0);
        (pos, ue_normal(pose))
    }
}

/// Per-AP channel gains for one user.
pub type ChannelVector = Vec<f64>;

pub fn lambertian_order(half_power_angle_deg: f64) -> f64 {
    -std::f64::consts::LN_2 / half_power_angle_deg.to_radians().cos().ln()
}

#[derive(Debug, Clone, Copy)]
struct FrontEnd {
    order: f64,
    pd_area: f64,
    fov: f64,
    responsivity: f64,
    filter_gain: f64,
    conc_gain: f64,
}

/// Minimum transmitter/receiver separation, m.
pub const MIN_DISTANCE: f64 = 1e-3;

/// Lambertian line-of-sight DC gain.
///
/// `half_power_angle` and `fov` are in degrees. The gain vanishes when the
/// receiver is behind the transmitter plane, the transmitter is behind the
/// receiver plane, or the incidence angle exceeds the field of view.
#[allow(clippy::too_many_arguments)]
pub fn los_gain(
    tx_pos: &Vec3,
    tx_normal: &Vec3,
    rx_pos: &Vec3,
    rx_normal: &Vec3,
    half_power_angle: f64,
    pd_area: f64,
    fov: f64,
    responsivity: f64,
    filter_gain: f64,
    conc_gain: f64,
) -> Result<f64> {
    let fe = FrontEnd {
        order: lambertian_order(half_power_angle),
        pd_area,
        fov,
        responsivity,
        filter_gain,
        conc_gain,
    };
    los_gain_with(tx_pos, tx_normal, rx_pos, rx_normal, &fe)
}

fn los_gain_with(
    tx_pos: &Vec3,
    tx_normal: &Vec3,
    rx_pos: &Vec3,
    rx_normal: &Vec3,
    fe: &FrontEnd,
) -> Result<f64> {
    let v = rx_pos - tx_pos;
    let d = v.norm();
    if !(d >= MIN_DISTANCE) {
        return Err(Error::DegenerateGeometry { distance: d });
    }
    let cos_phi = tx_normal.dot(&v) / d;
    let cos_psi = -rx_normal.dot(&v) / d;
    if cos_phi <= 0.0 || cos_psi <= 0.0 {
        return Ok(0.0);
    }
    // compare in the angle domain so that the cutoff is exact at the FOV
    if cos_psi.min(1.0).acos() > fe.fov.to_radians() {
        return Ok(0.0);
    }
    let radiant = (fe.order + 1.0) * fe.pd_area / (2.0 * PI * d * d) * cos_phi.powf(fe.order);
    Ok(fe.responsivity * fe.filter_gain * fe.conc_gain * radiant * cos_psi)
}

/// A small Lambertian reflector on one of the four walls.
#[derive(Debug, Clone, Copy)]
struct WallPatch {
    center: Vec3,
    normal: Vec3,
    area: f64,
}

fn wall_patches(layout: &RoomLayout, patch: f64) -> Vec<WallPatch> {
    let mut out = Vec::new();
    let nz = (layout.height / patch).ceil().max(1.0) as usize;
    let dz = layout.height / nz as f64;
    let mut wall = |span: f64, place: &dyn Fn(f64, f64) -> Vec3, normal: Vec3| {
        let ns = (span / patch).ceil().max(1.0) as usize;
        let ds = span / ns as f64;
        for i in 0..ns {
            for j in 0..nz {
                out.push(WallPatch {
                    center: place((i as f64 + 0.5) * ds, (j as f64 + 0.5) * dz),
                    normal,
                    area: ds * dz,
                });
            }
        }
    };
    let (l, w) = (layout.length, layout.width);
    wall(l, &|s, z| Vec3::new(s, 0.0, z), Vec3::new(0.0, 1.0, 0.0));
    wall(l, &|s, z| Vec3::new(s, w, z), Vec3::new(0.0, -1.0, 0.0));
    wall(w, &|s, z| Vec3::new(0.0, s, z), Vec3::new(1.0, 0.0, 0.0));
    wall(w, &|s, z| Vec3::new(l, s, z), Vec3::new(-1.0, 0.0, 0.0));
    out
}

/// First-reflection gain summed over wall patches of side `nlos_patch_size`.
///
/// Each patch collects power as a bare detector of its own area, then
/// re-emits a fraction `wall_reflectance` as an order-1 Lambertian source.
pub fn nlos_first_reflection_gain(
    tx_pos: &Vec3,
    tx_normal: &Vec3,
    rx_pos: &Vec3,
    rx_normal: &Vec3,
    layout: &RoomLayout,
) -> Result<f64> {
    let rho = layout.wall_reflectance;
    if rho == 0.0 {
        return Ok(0.0);
    }
    let fe = layout.front_end();
    let mut total = 0.0;
    for p in wall_patches(layout, layout.nlos_patch_size) {
        let to_wall = FrontEnd {
            order: fe.order,
            pd_area: p.area,
            fov: 90.0,
            responsivity: 1.0,
            filter_gain: 1.0,
            conc_gain: 1.0,
        };
        let from_wall = FrontEnd { order: 1.0, ..fe };
        // patch centres never coincide with a device that is inside the room
        // by more than a millimetre; skip the pathological case otherwise
        let (Ok(h1), Ok(h2)) = (
            los_gain_with(tx_pos, tx_normal, &p.center, &p.normal, &to_wall),
            los_gain_with(&p.center, &p.normal, rx_pos, rx_normal, &from_wall),
        ) else {
            continue;
        };
        total += h1 * rho * h2;
    }
    Ok(total)
}

fn check_inside(pose: &Pose, layout: &RoomLayout) -> Result<()> {
    if layout.contains(&pose.position()) {
        Ok(())
    } else {
        Err(Error::OutsideRoom {
            x: pose.x,
            y: pose.y,
            z: pose.z,
            length: layout.length,
            width: layout.width,
            height: layout.height,
        })
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Downlink,
    Uplink,
}

fn channel(pose: &Pose, layout: &RoomLayout, geom: &DeviceGeometry, dir: Direction) -> Result<ChannelVector> {
    check_inside(pose, layout)?;
    let (ue_pos, ue_n) = geom.front_end(pose);
    let ap_n = layout.ap_normal();
    let fe = layout.front_end();
    layout
        .ap_positions()
        .iter()
        .map(|ap| {
            let (tx, txn, rx, rxn) = match dir {
                Direction::Downlink => (ap, &ap_n, &ue_pos, &ue_n),
                Direction::Uplink => (&ue_pos, &ue_n, ap, &ap_n),
            };
            let mut g = los_gain_with(tx, txn, rx, rxn, &fe)?;
            if layout.nlos_enabled {
                g += nlos_first_reflection_gain(tx, txn, rx, rxn, layout)?;
            }
            Ok(g)
        })
        .collect()
}

/// Downlink gains from every AP LED to the device photodiode.
pub fn downlink_channel(pose: &Pose, layout: &RoomLayout, geom: &DeviceGeometry) -> Result<ChannelVector> {
    channel(pose, layout, geom, Direction::Downlink)
}

/// Uplink gains from the device IR LED to every AP photodiode. The device
/// LED shares the photodiode's position and normal.
pub fn uplink_channel(pose: &Pose, layout: &RoomLayout, geom: &DeviceGeometry) -> Result<ChannelVector> {
    channel(pose, layout, geom, Direction::Uplink)
}

/// Linear SNR of the DC reference signal when the uplink band is split
/// evenly across `users` devices: `g^2 I_DC^2 / (N0 B / K)`.
pub fn uplink_snr(gain: f64, dc_bias: f64, users: usize, noise_psd: f64, bandwidth: f64) -> f64 {
    gain * gain * dc_bias * dc_bias * users as f64 / (noise_psd * bandwidth)
}
