use alloc::vec::Vec;

use super::{ConditionToken, Layout, RawTrajectory, TrackPoint, Trajectory};
use crate::error::{Error, Result};
use crate::kinematics::{Anchor, SpeedTrack};

/// Signed shortest angular difference `b - a` in degrees, in `[-180, 180)`.
pub(crate) fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_degrees(b - a + 180.0) - 180.0
}

/// Map an angle in degrees into `[0, 360)`.
pub(crate) fn wrap_degrees(a: f64) -> f64 {
    let r = a % 360.0;
    if r < 0.0 {
        r + 360.0
    } else {
        r
    }
}

fn lerp_angle(a: f64, b: f64, w: f64) -> f64 {
    wrap_degrees(a + w * angle_diff(a, b))
}

/// Uniform query times over `[first, last]` with the interpolation segment and weight of each.
fn query_plan(raw: &RawTrajectory, steps: usize) -> Result<Vec<(usize, f64)>> {
    if steps < 2 {
        return Err(Error::InvalidConfig("resampling needs at least two steps".into()));
    }
    if raw.points.len() >= 2 && raw.duration() == 0.0 {
        return Err(Error::DegenerateDuration);
    }
    raw.validate()?;
    let t0 = raw.points[0].timestamp;
    let span = raw.duration();
    let pts = &raw.points;
    let mut seg = 0;
    let mut plan = Vec::with_capacity(steps);
    for i in 0..steps {
        let tq = if i + 1 == steps {
            pts[pts.len() - 1].timestamp
        } else {
            t0 + span * i as f64 / (steps - 1) as f64
        };
        while seg + 2 < pts.len() && pts[seg + 1].timestamp < tq {
            seg += 1;
        }
        let (a, b) = (pts[seg].timestamp, pts[seg + 1].timestamp);
        let w = ((tq - a) / (b - a)).clamp(0.0, 1.0);
        plan.push((seg, w));
    }
    Ok(plan)
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + w * (b - a)
}

/// Resample to `steps` uniformly spaced times, giving a geographic trajectory.
/// Position and altitude are interpolated linearly; the anchor is the final point.
pub fn resample(raw: &RawTrajectory, steps: usize) -> Result<Trajectory> {
    let plan = query_plan(raw, steps)?;
    let mut values = Vec::with_capacity(steps * 3);
    for &(seg, w) in &plan {
        let (p, q): (&TrackPoint, &TrackPoint) = (&raw.points[seg], &raw.points[seg + 1]);
        values.push(lerp(p.latitude, q.latitude, w));
        values.push(lerp(p.longitude, q.longitude, w));
        values.push(lerp(p.altitude, q.altitude, w));
    }
    let last = steps - 1;
    let anchor = Anchor { latitude: values[last * 3], longitude: values[last * 3 + 1] };
    Ok(Trajectory {
        values,
        steps,
        layout: Layout::Geographic,
        condition: ConditionToken::NULL,
        anchor: Some(anchor),
        dt: raw.duration() / (steps - 1) as f64,
    })
}

/// Groundspeed and track at the same times as [`resample`]; track follows the shortest arc.
pub fn resample_speed_track(raw: &RawTrajectory, steps: usize) -> Result<Vec<SpeedTrack>> {
    let plan = query_plan(raw, steps)?;
    Ok(plan
        .iter()
        .map(|&(seg, w)| {
            let (p, q) = (&raw.points[seg], &raw.points[seg + 1]);
            SpeedTrack {
                groundspeed: lerp(p.groundspeed, q.groundspeed, w),
                track: lerp_angle(p.track, q.track, w),
            }
        })
        .collect())
}
