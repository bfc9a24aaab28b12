//! Canonical text syntax for system strings.
//!
//! Whitespace-separated tokens `KIND{key=value;...}` with `KIND` one of
//! `I`, `O`, `S`, `A1`, `A2`. Algorithm tokens carry their name instead of
//! key-value pairs (`A1{a_nn}`). Omitted parameters take their defaults, so
//! a bare `S` is a 128x128, 30 fps, 8-bit RGB sensor at the origin.

use std::fmt::Write;

use super::{
    IlluminationParams, OpticParams, Pose, SensorParams, SystemString, Terminal, Wavelength,
};
use crate::error::{Error, Result};

pub fn to_text(s: &SystemString) -> String {
    s.terminals
        .iter()
        .map(terminal_to_text)
        .collect::<Vec<_>>()
        .join(" ")
}

fn pose_text(p: &Pose) -> String {
    p.to_array()
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub(super) fn terminal_to_text(t: &Terminal) -> String {
    let mut out = String::new();
    match t {
        Terminal::Sensor(s) => {
            let _ = write!(
                out,
                "S{{pose={};hw={},{};t={};wl={};q={}}}",
                pose_text(&s.pose),
                s.hw.0,
                s.hw.1,
                s.fps,
                s.wavelength.tag(),
                s.bits
            );
        }
        Terminal::Optic(o) => {
            let _ = write!(out, "O{{f={};d={}}}", o.focal_mm, o.aperture);
        }
        Terminal::Illumination(i) => {
            let _ = write!(out, "I{{pose={};i={}}}", pose_text(&i.pose), i.intensity);
        }
        Terminal::Algo1(name) => {
            let _ = write!(out, "A1{{{name}}}");
        }
        Terminal::Algo2(name) => {
            let _ = write!(out, "A2{{{name}}}");
        }
    }
    out
}

/// Character cursor that tracks 1-based line and column.
struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn at(&self) -> (usize, usize) {
        (self.line, self.column)
    }
}

fn err_at((line, column): (usize, usize), message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// A `key=value` field with the position of its value.
struct Field {
    key: String,
    value: String,
    at: (usize, usize),
}

pub fn from_text(text: &str) -> Result<SystemString> {
    let mut cur = Cursor::new(text);
    let mut terminals = Vec::new();
    loop {
        while cur.peek().is_some_and(char::is_whitespace) {
            cur.bump();
        }
        if cur.peek().is_none() {
            break;
        }
        terminals.push(parse_token(&mut cur)?);
    }
    if terminals.is_empty() {
        return Err(err_at(cur.at(), "empty system string"));
    }
    Ok(SystemString::new(terminals))
}

fn parse_token(cur: &mut Cursor) -> Result<Terminal> {
    let start = cur.at();
    let mut kind = String::new();
    while cur.peek().is_some_and(|c| c.is_ascii_alphanumeric()) {
        kind.push(cur.bump().unwrap());
    }
    let body = if cur.peek() == Some('{') {
        cur.bump();
        let body_at = cur.at();
        let mut body = String::new();
        loop {
            match cur.bump() {
                Some('}') => break,
                Some('{') => return Err(err_at(cur.at(), "nested '{'")),
                Some(c) => body.push(c),
                None => return Err(err_at(start, "unterminated '{'")),
            }
        }
        Some((body, body_at))
    } else {
        None
    };
    if cur.peek().is_some_and(|c| !c.is_whitespace()) {
        return Err(err_at(cur.at(), format!("unexpected character {:?}", cur.peek().unwrap())));
    }
    let terminal = match kind.as_str() {
        "S" => Terminal::Sensor(sensor(fields(body)?)?),
        "O" => Terminal::Optic(optic(fields(body)?)?),
        "I" => Terminal::Illumination(illumination(fields(body)?)?),
        "A1" | "A2" => {
            let Some((name, at)) = body else {
                return Err(err_at(start, format!("{kind} requires a name, e.g. {kind}{{a_nn}}")));
            };
            let name = name.trim().to_string();
            let t = if kind == "A1" {
                Terminal::Algo1(name)
            } else {
                Terminal::Algo2(name)
            };
            t.check().map_err(|e| err_at(at, e.to_string()))?;
            t
        }
        "" => return Err(err_at(start, "expected a terminal kind")),
        other => return Err(err_at(start, format!("unknown terminal kind {other:?}"))),
    };
    terminal.check().map_err(|e| err_at(start, e.to_string()))?;
    Ok(terminal)
}

fn fields(body: Option<(String, (usize, usize))>) -> Result<Vec<Field>> {
    let Some((body, (line, mut column))) = body else {
        return Ok(Vec::new());
    };
    let mut out: Vec<Field> = Vec::new();
    for part in body.split(';') {
        let at = (line, column);
        column += part.chars().count() + 1;
        let trimmed = part.trim();
        if trimmed.is_empty() {
            continue;
        }
        let Some((k, v)) = trimmed.split_once('=') else {
            return Err(err_at(at, format!("expected key=value, got {trimmed:?}")));
        };
        let key = k.trim().to_string();
        if out.iter().any(|f| f.key == key) {
            return Err(err_at(at, format!("duplicate key {key:?}")));
        }
        out.push(Field {
            key,
            value: v.trim().to_string(),
            at,
        });
    }
    Ok(out)
}

fn list<T: std::str::FromStr>(f: &Field, n: usize) -> Result<Vec<T>> {
    let parts: Vec<&str> = f.value.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(err_at(f.at, format!("{} expects {n} values", f.key)));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<T>()
                .map_err(|_| err_at(f.at, format!("bad value {p:?} for {}", f.key)))
        })
        .collect()
}

fn real(f: &Field) -> Result<f64> {
    let v = list::<f64>(f, 1)?[0];
    if !v.is_finite() {
        return Err(err_at(f.at, format!("{} must be finite", f.key)));
    }
    Ok(v)
}

fn positive_int(f: &Field) -> Result<u32> {
    let v = list::<u32>(f, 1)?[0];
    if v == 0 {
        return Err(err_at(f.at, format!("{} must be positive", f.key)));
    }
    Ok(v)
}

fn pose(f: &Field) -> Result<Pose> {
    let v = list::<f64>(f, 6)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(err_at(f.at, "pose must be finite"));
    }
    Ok(Pose::from_array([v[0], v[1], v[2], v[3], v[4], v[5]]))
}

fn unknown(f: &Field) -> Error {
    err_at(f.at, format!("unknown key {:?}", f.key))
}

fn sensor(fields: Vec<Field>) -> Result<SensorParams> {
    let mut s = SensorParams::default();
    for f in &fields {
        match f.key.as_str() {
            "pose" => s.pose = pose(f)?,
            "hw" => {
                let v = list::<u32>(f, 2)?;
                if v.contains(&0) {
                    return Err(err_at(f.at, "resolution must be positive"));
                }
                s.hw = (v[0], v[1]);
            }
            "t" => s.fps = positive_int(f)?,
            "wl" => {
                s.wavelength = Wavelength::from_tag(&f.value)
                    .ok_or_else(|| err_at(f.at, format!("unknown wavelength {:?}", f.value)))?
            }
            "q" => s.bits = positive_int(f)?,
            _ => return Err(unknown(f)),
        }
    }
    Ok(s)
}

fn optic(fields: Vec<Field>) -> Result<OpticParams> {
    let mut o = OpticParams::default();
    for f in &fields {
        match f.key.as_str() {
            "f" => {
                o.focal_mm = real(f)?;
                if o.focal_mm <= 0.0 {
                    return Err(err_at(f.at, "focal length must be positive"));
                }
            }
            "d" => o.aperture = positive_int(f)?,
            _ => return Err(unknown(f)),
        }
    }
    Ok(o)
}

fn illumination(fields: Vec<Field>) -> Result<IlluminationParams> {
    let mut i = IlluminationParams::default();
    for f in &fields {
        match f.key.as_str() {
            "pose" => i.pose = pose(f)?,
            "i" => {
                i.intensity = real(f)?;
                if i.intensity < 0.0 {
                    return Err(err_at(f.at, "intensity must be non-negative"));
                }
            }
            _ => return Err(unknown(f)),
        }
    }
    Ok(i)
}
