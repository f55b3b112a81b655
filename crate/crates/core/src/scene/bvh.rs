//! Biovision Hierarchy (BVH) parsing, serialization and forward kinematics.
//!
//! Only the subset needed for pose extraction is supported: a single root,
//! `End Site` blocks without channels, one motion line per frame.
//!
//! Rotation convention: the rotation channels of a joint are composed in the
//! order they appear in its `CHANNELS` line, each as an active right-handed
//! rotation about the named axis, so `Zrotation Xrotation Yrotation` yields
//! `R = Rz · Rx · Ry` acting on column vectors. A joint's global position is
//! `P_parent + R_parent · (offset + translation)` and its global rotation is
//! `R_parent · R_local`.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    fn parse(tok: &str) -> Option<Channel> {
        Some(match tok {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            _ => return None,
        })
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    /// `None` only for the root, which is always joint 0.
    pub parent: Option<usize>,
    pub offset: [f64; 3],
    pub channels: Vec<Channel>,
    pub end_site: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub joints: Vec<Joint>,
    /// `frames[i][c]` is the value of global channel `c` at frame `i`.
    pub frames: Vec<Vec<f64>>,
    /// Seconds per frame.
    pub frame_time: f64,
}

impl MotionClip {
    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Offset of each joint's first channel in a frame row.
    fn channel_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.joints
            .iter()
            .map(|j| {
                let start = acc;
                acc += j.channels.len();
                start
            })
            .collect()
    }

    /// Global joint positions at `frame`, in file units.
    pub fn forward_kinematics(&self, frame: usize) -> Result<Vec<[f64; 3]>> {
        let row = self
            .frames
            .get(frame)
            .ok_or_else(|| Error::domain(format!("frame {frame} out of range (clip has {})", self.frames.len())))?;
        let starts = self.channel_offsets();
        let mut pos = vec![[0.0; 3]; self.joints.len()];
        let mut rot = vec![IDENTITY; self.joints.len()];

        for (i, joint) in self.joints.iter().enumerate() {
            let mut translation = [0.0; 3];
            let mut local = IDENTITY;
            for (c, ch) in joint.channels.iter().enumerate() {
                let v = row[starts[i] + c];
                match ch {
                    Channel::Xposition => translation[0] = v,
                    Channel::Yposition => translation[1] = v,
                    Channel::Zposition => translation[2] = v,
                    Channel::Xrotation => local = mat_mul(&local, &rot_x(v)),
                    Channel::Yrotation => local = mat_mul(&local, &rot_y(v)),
                    Channel::Zrotation => local = mat_mul(&local, &rot_z(v)),
                }
            }
            let rel = add(joint.offset, translation);
            match joint.parent {
                None => {
                    pos[i] = rel;
                    rot[i] = local;
                }
                Some(p) => {
                    pos[i] = add(pos[p], mat_vec(&rot[p], rel));
                    rot[i] = mat_mul(&rot[p], &local);
                }
            }
        }
        Ok(pos)
    }

    /// Writes the clip back out as BVH text.
    pub fn to_bvh_string(&self) -> String {
        let mut out = String::from("HIERARCHY\n");
        if !self.joints.is_empty() {
            self.write_joint(&mut out, 0, 0);
        }
        let _ = writeln!(out, "MOTION");
        let _ = writeln!(out, "Frames: {}", self.frames.len());
        let _ = writeln!(out, "Frame Time: {}", self.frame_time);
        for row in &self.frames {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    fn write_joint(&self, out: &mut String, idx: usize, depth: usize) {
        let pad = "\t".repeat(depth);
        let j = &self.joints[idx];
        let kw = if j.parent.is_none() { "ROOT" } else { "JOINT" };
        let _ = writeln!(out, "{pad}{kw} {}", j.name);
        let _ = writeln!(out, "{pad}{{");
        let _ = writeln!(out, "{pad}\tOFFSET {} {} {}", j.offset[0], j.offset[1], j.offset[2]);
        let chans: Vec<String> = j.channels.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{pad}\tCHANNELS {} {}", chans.len(), chans.join(" "));
        for child in (0..self.joints.len()).filter(|&c| self.joints[c].parent == Some(idx)) {
            self.write_joint(out, child, depth + 1);
        }
        if let Some(e) = j.end_site {
            let _ = writeln!(out, "{pad}\tEnd Site");
            let _ = writeln!(out, "{pad}\t{{");
            let _ = writeln!(out, "{pad}\t\tOFFSET {} {} {}", e[0], e[1], e[2]);
            let _ = writeln!(out, "{pad}\t}}");
        }
        let _ = writeln!(out, "{pad}}}");
    }
}

type Mat3 = [[f64; 3]; 3];

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn rot_x(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

fn mat_vec(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

struct Tokens<'a> {
    toks: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(lines: &[(usize, &'a str)]) -> Self {
        let toks = lines.iter().flat_map(|&(n, l)| l.split_whitespace().map(move |t| (n, t))).collect();
        Tokens { toks, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.toks.last().map(|t| t.0).unwrap_or(1)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let t = self.toks.get(self.pos).copied().ok_or_else(|| Error::Parse {
            line: self.last_line(),
            message: format!("unexpected end of hierarchy, expected {what}"),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(|t| t.1)
    }

    fn expect(&mut self, kw: &str) -> Result<usize> {
        let (line, t) = self.next(kw)?;
        if t != kw {
            return Err(Error::Parse { line, message: format!("expected `{kw}`, found `{t}`") });
        }
        Ok(line)
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let (line, t) = self.next(what)?;
        t.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("expected {what}, found `{t}`") })
    }

    fn vec3(&mut self) -> Result<[f64; 3]> {
        Ok([self.number("offset x")?, self.number("offset y")?, self.number("offset z")?])
    }
}

/// Parses BVH text into a [`MotionClip`].
pub fn parse_bvh(text: &str) -> Result<MotionClip> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let hier = lines
        .iter()
        .position(|(_, l)| l.trim() == "HIERARCHY")
        .ok_or(Error::Parse { line: 1, message: "missing HIERARCHY section".into() })?;
    let motion = lines
        .iter()
        .position(|(_, l)| l.trim() == "MOTION")
        .ok_or(Error::Parse { line: lines.len().max(1), message: "missing MOTION section".into() })?;
    if motion < hier {
        return Err(Error::Parse { line: lines[motion].0, message: "MOTION before HIERARCHY".into() });
    }

    let mut toks = Tokens::new(&lines[hier + 1..motion]);
    let mut joints = Vec::new();
    toks.expect("ROOT")?;
    parse_joint(&mut toks, None, &mut joints)?;
    if let Some(t) = toks.peek() {
        let (line, _) = toks.next("")?;
        return Err(Error::Parse { line, message: format!("unexpected `{t}` after root joint") });
    }

    let channel_count: usize = joints.iter().map(|j| j.channels.len()).sum();
    let mut rest = lines[motion + 1..].iter().filter(|(_, l)| !l.trim().is_empty());

    let (fl, frames_line) =
        rest.next().ok_or(Error::Parse { line: lines[motion].0, message: "missing `Frames:` line".into() })?;
    let declared: usize = frames_line
        .trim()
        .strip_prefix("Frames:")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Parse { line: *fl, message: "malformed `Frames:` header".into() })?;

    let (tl, time_line) =
        rest.next().ok_or(Error::Parse { line: *fl, message: "missing `Frame Time:` line".into() })?;
    let frame_time: f64 = time_line
        .trim()
        .strip_prefix("Frame Time:")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Parse { line: *tl, message: "malformed `Frame Time:` header".into() })?;
    if !(frame_time > 0.0) {
        return Err(Error::Parse { line: *tl, message: "frame time must be positive".into() });
    }

    let mut frames = Vec::with_capacity(declared);
    let mut last_line = *tl;
    for &(n, line) in rest {
        last_line = n;
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Parse { line: n, message: format!("non-numeric motion value `{t}`") })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != channel_count {
            return Err(Error::Parse {
                line: n,
                message: format!("expected {channel_count} channel values, found {}", row.len()),
            });
        }
        frames.push(row);
    }
    if frames.len() != declared {
        return Err(Error::Parse {
            line: last_line,
            message: format!("declared {declared} frames, found {}", frames.len()),
        });
    }

    Ok(MotionClip { joints, frames, frame_time })
}

fn parse_joint(toks: &mut Tokens<'_>, parent: Option<usize>, joints: &mut Vec<Joint>) -> Result<()> {
    let (_, name) = toks.next("joint name")?;
    toks.expect("{")?;
    toks.expect("OFFSET")?;
    let offset = toks.vec3()?;
    let idx = joints.len();
    joints.push(Joint { name: name.to_string(), parent, offset, channels: Vec::new(), end_site: None });

    if toks.peek() == Some("CHANNELS") {
        toks.next("CHANNELS")?;
        let (line, n) = toks.next("channel count")?;
        let n: usize = n.parse().map_err(|_| Error::Parse { line, message: format!("bad channel count `{n}`") })?;
        for _ in 0..n {
            let (line, c) = toks.next("channel name")?;
            let ch =
                Channel::parse(c).ok_or_else(|| Error::Parse { line, message: format!("unknown channel `{c}`") })?;
            joints[idx].channels.push(ch);
        }
    }

    loop {
        let (line, t) = toks.next("`}`")?;
        match t {
            "}" => return Ok(()),
            "JOINT" => parse_joint(toks, Some(idx), joints)?,
            "End" => {
                toks.expect("Site")?;
                toks.expect("{")?;
                toks.expect("OFFSET")?;
                joints[idx].end_site = Some(toks.vec3()?);
                toks.expect("}")?;
            }
            other => return Err(Error::Parse { line, message: format!("unexpected `{other}` in joint block") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_JOINT: &str = "HIERARCHY
ROOT Hips
{
\tOFFSET 0 0 0
\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
\tJOINT Chest
\t{
\t\tOFFSET 1 0 0
\t\tCHANNELS 3 Zrotation Xrotation Yrotation
\t\tEnd Site
\t\t{
\t\t\tOFFSET 0 1 0
\t\t}
\t}
}
MOTION
Frames: 1
Frame Time: 0.0333333
0 0 0 0 0 0 0 0 0
";

    #[test]
    fn parses_two_joint_fixture() {
        let clip = parse_bvh(TWO_JOINT).unwrap();
        assert_eq!(clip.joints.len(), 2);
        assert_eq!(clip.frame_count(), 1);
        assert_eq!(clip.channel_count(), 9);
        assert_eq!(clip.joints[1].parent, Some(0));
        assert_eq!(clip.joints[1].end_site, Some([0.0, 1.0, 0.0]));
        assert_eq!(clip.joints[0].channels[3], Channel::Zrotation);
    }

    #[test]
    fn declared_frames_mismatch() {
        let text = TWO_JOINT.replace("Frames: 1", "Frames: 2");
        match parse_bvh(&text) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("declared 2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_frames_is_valid() {
        let text = TWO_JOINT.replace("Frames: 1", "Frames: 0").replace("0 0 0 0 0 0 0 0 0\n", "");
        let clip = parse_bvh(&text).unwrap();
        assert_eq!(clip.frame_count(), 0);
        assert_eq!(clip.joints.len(), 2);
    }

    #[test]
    fn non_numeric_value_names_line() {
        let text = TWO_JOINT.replace("0 0 0 0 0 0 0 0 0", "0 0 0 0 x 0 0 0 0");
        match parse_bvh(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 19),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn value_count_mismatch() {
        let text = TWO_JOINT.replace("0 0 0 0 0 0 0 0 0", "0 0 0");
        assert!(matches!(parse_bvh(&text), Err(Error::Parse { line: 19, .. })));
    }

    #[test]
    fn missing_sections() {
        assert!(parse_bvh("ROOT a { OFFSET 0 0 0 }").is_err());
        let no_motion = TWO_JOINT.split("MOTION").next().unwrap();
        assert!(parse_bvh(no_motion).is_err());
    }

    #[test]
    fn malformed_header() {
        let text = TWO_JOINT.replace("OFFSET 1 0 0", "OFFSET 1 zero 0");
        assert!(matches!(parse_bvh(&text), Err(Error::Parse { line: 8, .. })));
    }

    #[test]
    fn fk_identity_is_cumulative_offsets() {
        let clip = parse_bvh(TWO_JOINT).unwrap();
        let p = clip.forward_kinematics(0).unwrap();
        assert_eq!(p[0], [0.0, 0.0, 0.0]);
        assert_eq!(p[1], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn fk_pure_translation() {
        let text = TWO_JOINT.replace("0 0 0 0 0 0 0 0 0", "1 2 3 0 0 0 0 0 0");
        let p = parse_bvh(&text).unwrap().forward_kinematics(0).unwrap();
        assert_eq!(p[0], [1.0, 2.0, 3.0]);
        assert_eq!(p[1], [2.0, 2.0, 3.0]);
    }

    #[test]
    fn fk_yaw_quarter_turn() {
        // Ry(90°) · (1,0,0) = (cos 90°, 0, -sin 90°) = (0, 0, -1).
        let text = TWO_JOINT.replace("0 0 0 0 0 0 0 0 0", "0 0 0 0 0 90 0 0 0");
        let p = parse_bvh(&text).unwrap().forward_kinematics(0).unwrap();
        assert!(p[1][0].abs() < 1e-12);
        assert!(p[1][1].abs() < 1e-12);
        assert!((p[1][2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn fk_frame_out_of_range() {
        let clip = parse_bvh(TWO_JOINT).unwrap();
        assert!(clip.forward_kinematics(1).is_err());
    }

    #[test]
    fn serialize_round_trip() {
        let text = TWO_JOINT.replace("0 0 0 0 0 0 0 0 0", "1.5 -2 3 10 20 30.25 -4 5 6");
        let clip = parse_bvh(&text).unwrap();
        let again = parse_bvh(&clip.to_bvh_string()).unwrap();
        assert_eq!(clip, again);
    }
}
