//! Class-to-motor mapping, attention gating, the controller wire frame and a
//! differential-drive simulator.
//!
//! Motor 1 drives the left wheel and motor 2 the right wheel; clockwise
//! rotation moves a wheel forward.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotorState {
    Off,
    Clockwise,
    AntiClockwise,
}

impl MotorState {
    pub const ALL: [MotorState; 3] = [MotorState::Off, MotorState::Clockwise, MotorState::AntiClockwise];

    pub fn code(self) -> u8 {
        match self {
            MotorState::Off => 0,
            MotorState::Clockwise => 1,
            MotorState::AntiClockwise => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(MotorState::Off),
            1 => Ok(MotorState::Clockwise),
            2 => Ok(MotorState::AntiClockwise),
            c => Err(Error::Frame(format!("invalid motor code {c}"))),
        }
    }

    /// Signed wheel speed as a multiple of the rated speed.
    fn direction(self) -> f64 {
        match self {
            MotorState::Off => 0.0,
            MotorState::Clockwise => 1.0,
            MotorState::AntiClockwise => -1.0,
        }
    }
}

impl fmt::Display for MotorState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotorState::Off => "Off",
            MotorState::Clockwise => "Clockwise",
            MotorState::AntiClockwise => "Anti Clockwise",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Back,
    Front,
    Left,
    Right,
    Stop,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Back => "Back",
            Action::Front => "Front",
            Action::Left => "Left",
            Action::Right => "Right",
            Action::Stop => "Stop",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MotorCommand {
    pub motor1: MotorState,
    pub motor2: MotorState,
    pub action: Action,
}

use MotorState::{AntiClockwise, Clockwise, Off};

/// Indexed by class id.
pub const COMMANDS: [MotorCommand; 4] = [
    MotorCommand { motor1: AntiClockwise, motor2: AntiClockwise, action: Action::Back },
    MotorCommand { motor1: Clockwise, motor2: Clockwise, action: Action::Front },
    MotorCommand { motor1: Off, motor2: Clockwise, action: Action::Left },
    MotorCommand { motor1: Clockwise, motor2: Off, action: Action::Right },
];

pub const STOP: MotorCommand = MotorCommand {
    motor1: Off,
    motor2: Off,
    action: Action::Stop,
};

impl MotorCommand {
    /// The documented command with these motor states, if any.
    pub fn from_motors(motor1: MotorState, motor2: MotorState) -> Option<Self> {
        COMMANDS
            .iter()
            .chain(std::iter::once(&STOP))
            .find(|c| c.motor1 == motor1 && c.motor2 == motor2)
            .copied()
    }
}

pub fn class_to_motor(class_id: u8) -> Result<MotorCommand> {
    COMMANDS
        .get(class_id as usize)
        .copied()
        .ok_or(Error::Class(class_id))
}

pub const DEFAULT_ATTENTION_THRESHOLD: u8 = 50;

/// Moves only when `attention_level >= threshold`; otherwise [`STOP`].
pub fn gate_by_attention(class_id: u8, attention_level: u8, threshold: u8) -> Result<MotorCommand> {
    if attention_level > 100 {
        return Err(Error::Range(format!("attention level {attention_level} outside 0..=100")));
    }
    if threshold > 100 {
        return Err(Error::Range(format!("attention threshold {threshold} outside 0..=100")));
    }
    let cmd = class_to_motor(class_id)?;
    Ok(if attention_level >= threshold { cmd } else { STOP })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians in (−π, π].
    pub heading: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self { x: 0.0, y: 0.0, heading: 0.0 }
    }
}

/// Maps any finite angle into (−π, π].
pub fn normalize_heading(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChassisConfig {
    /// Wheel ground speed in m/s at rated rotation.
    pub wheel_speed: f64,
    /// Distance between the wheels in meters.
    pub track_width: f64,
}

impl Default for ChassisConfig {
    fn default() -> Self {
        Self {
            wheel_speed: 0.3,
            track_width: 0.3,
        }
    }
}

impl ChassisConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("wheel_speed", self.wheel_speed), ("track_width", self.track_width)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Param(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Left and right wheel velocities for a command.
    pub fn wheel_velocities(&self, cmd: &MotorCommand) -> (f64, f64) {
        (
            cmd.motor1.direction() * self.wheel_speed,
            cmd.motor2.direction() * self.wheel_speed,
        )
    }
}

/// Exact unicycle integration of a constant command over `dt` seconds.
pub fn step_kinematics(pose: Pose, cmd: &MotorCommand, dt: f64, chassis: &ChassisConfig) -> Result<Pose> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Param(format!("time step must be positive, got {dt}")));
    }
    chassis.validate()?;
    let (vl, vr) = chassis.wheel_velocities(cmd);
    let v = (vl + vr) / 2.0;
    let omega = (vr - vl) / chassis.track_width;
    let th = pose.heading;
    let (x, y, heading) = if omega == 0.0 {
        (pose.x + v * dt * th.cos(), pose.y + v * dt * th.sin(), th)
    } else {
        let th1 = th + omega * dt;
        let r = v / omega;
        (
            pose.x + r * (th1.sin() - th.sin()),
            pose.y - r * (th1.cos() - th.cos()),
            th1,
        )
    };
    Ok(Pose {
        x,
        y,
        heading: normalize_heading(heading),
    })
}

pub const FRAME_START: u8 = 0xD5;
pub const FRAME_LEN: usize = 6;

/// Decoded controller frame. Any pair of motor states is representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriveFrame {
    pub sequence: u16,
    pub motor1: MotorState,
    pub motor2: MotorState,
}

impl DriveFrame {
    pub fn encode(&self) -> [u8; FRAME_LEN] {
        let [hi, lo] = self.sequence.to_be_bytes();
        let (m1, m2) = (self.motor1.code(), self.motor2.code());
        let sum = hi.wrapping_add(lo).wrapping_add(m1).wrapping_add(m2);
        [FRAME_START, hi, lo, m1, m2, !sum]
    }

    pub fn command(&self) -> Option<MotorCommand> {
        MotorCommand::from_motors(self.motor1, self.motor2)
    }
}

pub fn encode_drive_frame(cmd: &MotorCommand, sequence: u16) -> [u8; FRAME_LEN] {
    DriveFrame {
        sequence,
        motor1: cmd.motor1,
        motor2: cmd.motor2,
    }
    .encode()
}

pub fn decode_drive_frame(bytes: &[u8]) -> Result<DriveFrame> {
    if bytes.len() != FRAME_LEN {
        return Err(Error::Frame(format!("expected {FRAME_LEN} bytes, got {}", bytes.len())));
    }
    if bytes[0] != FRAME_START {
        return Err(Error::Frame(format!("bad start byte {:#04x}", bytes[0])));
    }
    let sum = bytes[1..5].iter().fold(0u8, |a, b| a.wrapping_add(*b));
    if !sum != bytes[5] {
        return Err(Error::Frame(format!(
            "checksum {:#04x} does not match {:#04x}",
            bytes[5], !sum
        )));
    }
    Ok(DriveFrame {
        sequence: u16::from_be_bytes([bytes[1], bytes[2]]),
        motor1: MotorState::from_code(bytes[3])?,
        motor2: MotorState::from_code(bytes[4])?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub threshold: u8,
    /// Seconds each command is applied.
    pub hold: f64,
    pub chassis: ChassisConfig,
    pub start: Pose,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_ATTENTION_THRESHOLD,
            hold: 1.0,
            chassis: ChassisConfig::default(),
            start: Pose::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// Seconds at the end of the hold.
    pub time: f64,
    pub class_id: u8,
    pub attention: u8,
    pub action: Action,
    pub pose: Pose,
}

/// Applies each `(class, attention)` event through the gate for one hold
/// period. Returns the pose trace and the controller frame sent per event.
pub fn simulate(events: &[(u8, u8)], config: &SimConfig) -> Result<(Vec<TraceRow>, Vec<[u8; FRAME_LEN]>)> {
    config.chassis.validate()?;
    if !(config.hold.is_finite() && config.hold > 0.0) {
        return Err(Error::Param(format!("hold must be positive, got {}", config.hold)));
    }
    let mut pose = config.start;
    let mut trace = Vec::with_capacity(events.len());
    let mut frames = Vec::with_capacity(events.len());
    for (i, &(class_id, attention)) in events.iter().enumerate() {
        let cmd = gate_by_attention(class_id, attention, config.threshold)?;
        pose = step_kinematics(pose, &cmd, config.hold, &config.chassis)?;
        frames.push(encode_drive_frame(&cmd, i as u16));
        trace.push(TraceRow {
            time: (i + 1) as f64 * config.hold,
            class_id,
            attention,
            action: cmd.action,
            pose,
        });
    }
    Ok((trace, frames))
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("time,class,attention,action,x,y,heading\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{:.3},{},{},{},{:.9},{:.9},{:.9}",
            r.time, r.class_id, r.attention, r.action, r.pose.x, r.pose.y, r.pose.heading
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_table_rows() {
        let left = class_to_motor(2).unwrap();
        assert_eq!((left.motor1, left.motor2, left.action), (Off, Clockwise, Action::Left));
        let front = class_to_motor(1).unwrap();
        assert_eq!((front.motor1, front.motor2, front.action), (Clockwise, Clockwise, Action::Front));
        assert!(matches!(class_to_motor(4), Err(Error::Class(4))));
    }

    #[test]
    fn gate_examples() {
        assert_eq!(gate_by_attention(1, 80, 50).unwrap().action, Action::Front);
        assert_eq!(gate_by_attention(1, 20, 50).unwrap(), STOP);
        for level in 0..=100 {
            assert_eq!(gate_by_attention(3, level, 0).unwrap(), COMMANDS[3]);
        }
        assert!(matches!(gate_by_attention(1, 101, 50), Err(Error::Range(_))));
    }

    #[test]
    fn stop_frame_bytes() {
        assert_eq!(encode_drive_frame(&STOP, 0), [0xD5, 0, 0, 0, 0, 0xFF]);
        let f = encode_drive_frame(&COMMANDS[0], 0x0102);
        assert_eq!(f, [0xD5, 0x01, 0x02, 0x02, 0x02, !0x07u8]);
    }

    #[test]
    fn bad_code_is_a_frame_error() {
        let mut f = encode_drive_frame(&STOP, 0);
        f[3] = 7;
        f[5] = !7u8;
        assert!(matches!(decode_drive_frame(&f), Err(Error::Frame(_))));
    }

    #[test]
    fn heading_normalization() {
        assert_eq!(normalize_heading(PI), PI);
        assert_eq!(normalize_heading(-PI), PI);
        assert!((normalize_heading(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(normalize_heading(0.25), 0.25);
    }

    #[test]
    fn front_and_stop() {
        let c = ChassisConfig::default();
        let p = step_kinematics(Pose::default(), &COMMANDS[1], 2.0, &c).unwrap();
        assert!((p.x - 0.6).abs() < 1e-15 && p.y == 0.0 && p.heading == 0.0);
        let q = step_kinematics(p, &STOP, 5.0, &c).unwrap();
        assert_eq!(p, q);
        assert!(step_kinematics(p, &STOP, 0.0, &c).is_err());
    }

    #[test]
    fn simulation_gates_low_attention() {
        let (trace, frames) = simulate(&[(1, 90), (1, 10), (2, 60)], &SimConfig::default()).unwrap();
        assert_eq!(trace[1].action, Action::Stop);
        assert_eq!(trace[0].pose.x, trace[1].pose.x);
        assert_eq!(decode_drive_frame(&frames[2]).unwrap().sequence, 2);
        let csv = trace_csv(&trace);
        assert!(csv.starts_with("time,class,attention,action,x,y,heading\n1.000,1,90,Front,0.300000000,"));
    }
}
