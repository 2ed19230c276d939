use super::{format_fixed2, parse_number, Cursor};
use crate::error::{Error, Result};
use crate::geometry::{Trajectory, Waypoint};

/// `[X.XX,Y.YY]`
pub fn encode_waypoint(p: &Waypoint) -> Result<String> {
    Ok(format!("[{},{}]", format_fixed2(p.x)?, format_fixed2(p.y)?))
}

/// Waypoints rendered as `[X.XX,Y.YY]`, separated by single spaces.
pub fn encode_trajectory(t: &Trajectory) -> Result<String> {
    let items = t
        .points()
        .iter()
        .map(encode_waypoint)
        .collect::<Result<Vec<_>>>()?;
    Ok(items.join(" "))
}

fn waypoint_at(cur: &mut Cursor<'_>) -> Result<Waypoint> {
    cur.expect(b'[')?;
    let (x_at, x_tok) = cur.take_until(b",]");
    let x = parse_number(x_tok)
        .ok_or_else(|| Error::parse(x_at, format!("invalid number `{}`", x_tok.trim())))?;
    cur.expect(b',')?;
    let (y_at, y_tok) = cur.take_until(b",]");
    let y = parse_number(y_tok)
        .ok_or_else(|| Error::parse(y_at, format!("invalid number `{}`", y_tok.trim())))?;
    cur.expect(b']')?;
    Ok(Waypoint::new(x, y))
}

/// Parses a single `[x,y]` item (surrounding whitespace allowed).
pub fn parse_waypoint(s: &str) -> Result<Waypoint> {
    let mut cur = Cursor::new(s);
    cur.skip_ws();
    let p = waypoint_at(&mut cur)?;
    cur.skip_ws();
    if !cur.at_end() {
        return Err(Error::parse(cur.pos(), "trailing characters after waypoint"));
    }
    Ok(p)
}

/// Parses a whitespace-separated list of `[x,y]` items.
pub fn parse_waypoints(s: &str) -> Result<Vec<Waypoint>> {
    let mut cur = Cursor::new(s);
    cur.skip_ws();
    if cur.at_end() {
        return Err(Error::parse(0, "empty waypoint list"));
    }
    let mut out = Vec::new();
    loop {
        out.push(waypoint_at(&mut cur)?);
        let gap = cur.skip_ws();
        if cur.at_end() {
            break;
        }
        if gap == 0 {
            return Err(Error::parse(cur.pos(), "waypoints must be separated by whitespace"));
        }
    }
    Ok(out)
}

pub fn decode_trajectory(s: &str, dt: f64) -> Result<Trajectory> {
    Trajectory::new(dt, parse_waypoints(s)?)
}
