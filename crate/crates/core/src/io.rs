//! CSV tables and JSON documents. Every float is written with 17
//! significant digits, which round-trips `f64` exactly and keeps files
//! byte-stable across runs.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::analytic::GridSample;
use crate::config::Apparatus;
use crate::eprb::PairRecord;
use crate::error::{Error, Result};
use crate::guidance::{ParticleState, SpinVector};
use crate::sterngerlach::ParticleRecord;

/// `x` in scientific notation with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Pretty JSON formatter writing floats through [`format_f64`].
pub struct SigDigitsFormatter<'a>(PrettyFormatter<'a>);

impl Default for SigDigitsFormatter<'_> {
    fn default() -> Self {
        Self(PrettyFormatter::new())
    }
}

impl Formatter for SigDigitsFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Pretty JSON with 17-digit floats and a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitsFormatter::default());
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Serialization(format!("{other:?}")),
    }
}

fn row<W: Write>(w: &mut csv::Writer<W>, fields: &[String]) -> Result<()> {
    w.write_record(fields).map_err(csv_error)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

pub const GRID_HEADER: [&str; 8] = ["x", "z", "t", "re_plus", "im_plus", "re_minus", "im_minus", "density"];

pub fn write_grid_csv<W: Write>(out: W, samples: &[GridSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRID_HEADER).map_err(csv_error)?;
    for s in samples {
        let v = [
            s.x,
            s.z,
            s.t,
            s.spinor.plus.re,
            s.spinor.plus.im,
            s.spinor.minus.re,
            s.spinor.minus.im,
            s.density,
        ];
        row(&mut w, &v.map(format_f64))?;
    }
    flush(w)
}

pub const TRAJECTORY_HEADER: [&str; 11] = ["traj_id", "t", "x", "z", "y", "theta", "phi", "sx", "sy", "sz", "phase_tag"];

/// Samples inside the magnet are tagged `in_field`, later ones `free`.
pub fn phase_tag(app: &Apparatus, t: f64) -> &'static str {
    if t <= app.t_exit() {
        "in_field"
    } else {
        "free"
    }
}

/// One row per sample of each `(id, samples)` trajectory.
pub fn write_trajectories_csv<'a, W: Write>(
    out: W,
    app: &Apparatus,
    trajectories: impl IntoIterator<Item = (u64, &'a [ParticleState])>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER).map_err(csv_error)?;
    for (id, samples) in trajectories {
        for s in samples {
            let spin = SpinVector::from_orientation(&s.spin, app.config.hbar);
            let mut fields = vec![id.to_string()];
            fields.extend([s.t, s.x, s.z, s.y, s.spin.theta, s.spin.phi, spin.sx, spin.sy, spin.sz].map(format_f64));
            fields.push(phase_tag(app, s.t).to_string());
            row(&mut w, &fields)?;
        }
    }
    flush(w)
}

/// Trajectories kept in an ensemble run.
pub fn write_traced_csv<W: Write>(out: W, app: &Apparatus, records: &[ParticleRecord]) -> Result<()> {
    write_trajectories_csv(
        out,
        app,
        records
            .iter()
            .filter_map(|r| r.trace.as_deref().map(|t| (r.draw.index, t))),
    )
}

pub const IMPACT_HEADER: [&str; 9] = ["index", "x0", "z0", "theta0", "phi0", "outcome", "predicted", "z_decision", "z_final"];

/// One row per particle of an ensemble run.
pub fn write_impacts_csv<W: Write>(out: W, records: &[ParticleRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(IMPACT_HEADER).map_err(csv_error)?;
    for r in records {
        let d = &r.draw;
        let mut fields = vec![d.index.to_string()];
        fields.extend([d.x0, d.z0, d.theta0, d.phi0].map(format_f64));
        fields.push(r.outcome.as_i8().to_string());
        fields.push(r.predicted.as_i8().to_string());
        fields.extend([r.z_decision, r.z_final].map(format_f64));
        row(&mut w, &fields)?;
    }
    flush(w)
}

pub const PAIR_HEADER: [&str; 8] = ["pair_id", "thetaA0", "phiA0", "z0A", "z0B", "a", "b", "delta"];

pub fn write_pairs_csv<W: Write>(out: W, records: &[PairRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PAIR_HEADER).map_err(csv_error)?;
    for r in records {
        let p = &r.pair;
        let mut fields = vec![p.pair_id.to_string()];
        fields.extend([p.theta_a0, p.phi_a0, p.z0a, p.z0b].map(format_f64));
        fields.push(r.outcome.a.as_i8().to_string());
        fields.push(r.outcome.b.as_i8().to_string());
        fields.push(format_f64(r.outcome.delta));
        row(&mut w, &fields)?;
    }
    flush(w)
}
