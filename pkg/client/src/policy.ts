/**
 * Waypoint-following, obstacle-braking driving policy.
 *
 * Mirrors the harness's builtin sensor policy constant for constant so that
 * cross-language score parity is checkable: pure-pursuit steering from
 * GNSS + compass, full brake on close actor pixels, close forward LiDAR
 * returns, or stop-line pixels in the forward camera window.
 */

import { Control, Observation, RouteInfo, xyFromGnss } from "./protocol";

export const CRUISE_SPEED = 6.0;
export const LOOKAHEAD_M = 7.0;
export const STEER_GAIN = 2.0;
export const THROTTLE_GAIN = 0.6;
export const BRAKE_RANGE_M = 8.0;
export const TTC_THRESHOLD_S = 2.0;
export const CORRIDOR_HALF_WIDTH_M = 2.0;
export const EGO_HALF_LEN = 2.2;

// Forward detection window on the 64x64, 0.5 m/px raster (ego centered,
// heading up): rows 16..29 = forward 1.0..8.0 m, cols 27..36 = +-2.25 m.
export const CAM_ROW_START = 16;
export const CAM_ROW_END = 30;
export const CAM_COL_START = 27;
export const CAM_COL_END = 37;
export const ACTOR_PIXEL_MIN = 240;
export const ACTOR_PIXEL_COUNT = 6;
export const STOPLINE_BAND: [number, number] = [170, 190];
export const STOPLINE_PIXEL_COUNT = 3;
// More near-white than this across the whole frame means the camera itself
// is faulty; its cues are ignored and the policy leans on GNSS.
export const CAMERA_TRUST_MAX_BRIGHT_FRACTION = 0.1;

function clamp(x: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, x));
}

function scalar(obs: Observation, kind: string): number[] | null {
  const reading = obs.scalars.find((s) => s.kind === kind);
  return reading ? reading.values : null;
}

/** Pure-pursuit target: walk forward from the nearest waypoint until the
 * lookahead distance is exceeded. */
export function targetWaypoint(
  pos: [number, number],
  waypoints: [number, number][],
): [number, number] {
  const d = waypoints.map((w) => Math.hypot(w[0] - pos[0], w[1] - pos[1]));
  let idx = 0;
  for (let i = 1; i < d.length; i++) {
    if (d[i] < d[idx]) {
      idx = i;
    }
  }
  while (idx + 1 < waypoints.length && d[idx] < LOOKAHEAD_M) {
    idx += 1;
  }
  return waypoints[idx];
}

export function steerTowards(
  pos: [number, number],
  heading: number,
  target: [number, number],
): number {
  const bearing = Math.atan2(target[1] - pos[1], target[0] - pos[0]);
  let err = (bearing - heading + Math.PI) % (2 * Math.PI);
  if (err < 0) {
    err += 2 * Math.PI;
  }
  err -= Math.PI;
  return clamp(STEER_GAIN * err, -1, 1);
}

function cameraWantsBrake(obs: Observation): boolean {
  if (obs.camera === null) {
    return false;
  }
  const { width, pixels } = obs.camera;
  let brightTotal = 0;
  for (let i = 0; i < pixels.length; i++) {
    if (pixels[i] >= ACTOR_PIXEL_MIN) {
      brightTotal += 1;
    }
  }
  if (brightTotal > CAMERA_TRUST_MAX_BRIGHT_FRACTION * pixels.length) {
    return false; // camera is clearly faulty; ignore it
  }
  let bright = 0;
  let stopline = 0;
  for (let r = CAM_ROW_START; r < CAM_ROW_END; r++) {
    for (let c = CAM_COL_START; c < CAM_COL_END; c++) {
      const v = pixels[r * width + c];
      if (v >= ACTOR_PIXEL_MIN) {
        bright += 1;
      }
      if (v >= STOPLINE_BAND[0] && v <= STOPLINE_BAND[1]) {
        stopline += 1;
      }
    }
  }
  return bright >= ACTOR_PIXEL_COUNT || stopline >= STOPLINE_PIXEL_COUNT;
}

function lidarWantsBrake(obs: Observation, speed: number): boolean {
  if (obs.lidar === null) {
    return false;
  }
  let minForward = Infinity;
  const pts = obs.lidar.points;
  for (let i = 0; i < pts.length; i += 4) {
    const x = pts[i];
    const y = pts[i + 1];
    if (x > 0.5 && Math.abs(y) <= CORRIDOR_HALF_WIDTH_M) {
      minForward = Math.min(minForward, x);
    }
  }
  if (minForward === Infinity) {
    return false;
  }
  const surfaceRange = minForward - EGO_HALF_LEN;
  if (surfaceRange < BRAKE_RANGE_M) {
    return true;
  }
  return speed > 0.1 && surfaceRange / speed < TTC_THRESHOLD_S;
}

/** One control decision from one observation. Missing sensors degrade the
 * policy (steer 0 / no braking cue) rather than throwing. */
export function decideControl(obs: Observation, route: RouteInfo): Control {
  const gnss = scalar(obs, "GNSS");
  const imu = scalar(obs, "IMU");

  let steer = 0.0;
  if (gnss !== null && imu !== null && route.waypoints.length >= 2) {
    const pos = xyFromGnss(gnss[0], gnss[1], route.anchor);
    const compass = imu[3];
    const waypoints = route.waypoints.map((w) =>
      xyFromGnss(w[0], w[1], route.anchor),
    );
    steer = steerTowards(pos, compass, targetWaypoint(pos, waypoints));
  }

  const speedo = scalar(obs, "SPEEDOMETER");
  const speed = speedo !== null ? speedo[0] : CRUISE_SPEED / 2.0;

  const brake = cameraWantsBrake(obs) || lidarWantsBrake(obs, speed);
  if (brake) {
    return { steer, throttle: 0.0, brake: 1.0 };
  }
  return {
    steer,
    throttle: clamp(THROTTLE_GAIN * (CRUISE_SPEED - speed), 0, 1),
    brake: 0.0,
  };
}
