use std::io::{Read, Write};

use chrono::{DateTime, FixedOffset, SecondsFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::Projection;
use crate::types::{Mobility, StationClass};

pub const RAW_HEADER: [&str; 7] = ["sensor_id", "time_iso8601", "lat", "lon", "pm10_ugm3", "mobility", "run_id"];

/// One line of a raw sensor feed, already projected to planar meters.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub sensor_id: String,
    pub time: DateTime<FixedOffset>,
    pub x: f64,
    pub y: f64,
    /// µg/m³
    pub concentration: f64,
    pub mobility: Mobility,
    pub run_id: String,
    pub station_class: StationClass,
}

impl RawRecord {
    pub fn t(&self) -> f64 {
        self.time.timestamp() as f64 + self.time.timestamp_subsec_nanos() as f64 * 1e-9
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    sensor_id: String,
    time_iso8601: String,
    lat: f64,
    lon: f64,
    pm10_ugm3: f64,
    mobility: String,
    run_id: String,
}

pub fn parse_time(s: &str) -> Result<DateTime<FixedOffset>> {
    DateTime::parse_from_rfc3339(s.trim()).map_err(|e| Error::Parse(format!("bad timestamp `{s}`: {e}")))
}

pub fn format_time(t: &DateTime<FixedOffset>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, false)
}

/// Reads a raw observation CSV. Every record gets `class` as station class.
pub fn read_raw_csv<R: Read>(reader: R, proj: &Projection, class: StationClass) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != RAW_HEADER {
        return Err(Error::Parse(format!(
            "unexpected header `{}`; expected `{}`",
            got.join(","),
            RAW_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row?;
        if !(row.pm10_ugm3 >= 0.0) {
            return Err(Error::Parse(format!("row {}: negative or missing concentration", line + 1)));
        }
        let (x, y) = proj.forward(row.lat, row.lon);
        out.push(RawRecord {
            sensor_id: row.sensor_id,
            time: parse_time(&row.time_iso8601)?,
            x,
            y,
            concentration: row.pm10_ugm3,
            mobility: row.mobility.parse()?,
            run_id: row.run_id,
            station_class: class,
        });
    }
    Ok(out)
}

pub fn write_raw_csv<W: Write>(writer: W, records: &[RawRecord], proj: &Projection) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        let (lat, lon) = proj.inverse(r.x, r.y);
        w.serialize(Row {
            sensor_id: r.sensor_id.clone(),
            time_iso8601: format_time(&r.time),
            lat: (lat * 1e9).round() / 1e9,
            lon: (lon * 1e9).round() / 1e9,
            pm10_ugm3: r.concentration,
            mobility: r.mobility.as_str().to_string(),
            run_id: r.run_id.clone(),
        })?;
    }
    if records.is_empty() {
        w.write_record(RAW_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let proj = Projection::default();
        let rec = RawRecord {
            sensor_id: "m1".into(),
            time: parse_time("2018-11-26T12:00:00+01:00").unwrap(),
            x: 120.5,
            y: -33.25,
            concentration: 17.5,
            mobility: Mobility::Mobile,
            run_id: "m1-r0".into(),
            station_class: StationClass::LowCost,
        };
        let mut buf = Vec::new();
        write_raw_csv(&mut buf, &[rec.clone()], &proj).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sensor_id,time_iso8601,lat,lon,pm10_ugm3,mobility,run_id\n"));
        let back = read_raw_csv(&buf[..], &proj, StationClass::LowCost).unwrap();
        assert_eq!(back.len(), 1);
        assert!((back[0].x - rec.x).abs() < 1e-3 && (back[0].y - rec.y).abs() < 1e-3);
        assert_eq!(back[0].time, rec.time);
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "id,time,lat,lon,pm10,mobility,run\n";
        assert!(read_raw_csv(text.as_bytes(), &Projection::default(), StationClass::LowCost).is_err());
    }
}
