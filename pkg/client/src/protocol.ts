/** Message codec for the sraf/1 protocol (see docs/protocol.md). */

import { canonicalLine } from "./canonical";

export const PROTOCOL_VERSION = "sraf/1";

export interface CameraFrame {
  width: number;
  height: number;
  pixels: Uint8Array; // row-major, width * height bytes
}

export interface LidarCloud {
  numChannels: number;
  /** flat [x, y, z, channel, ...] exactly as on the wire */
  points: number[];
}

export interface ScalarReading {
  kind: string;
  values: number[];
}

export interface Observation {
  tick: number;
  simTimeS: number;
  camera: CameraFrame | null;
  lidar: LidarCloud | null;
  scalars: ScalarReading[];
}

export interface RouteInfo {
  anchor: [number, number];
  waypoints: [number, number][];
}

export interface HelloAck {
  dt: number;
  route: RouteInfo;
  suite: { camera: boolean; lidar: boolean; scalars: string[] };
  version: string;
}

export interface Control {
  steer: number;
  throttle: number;
  brake: number;
}

export function encodeHello(name: string, version = PROTOCOL_VERSION): string {
  return canonicalLine({ name, type: "HELLO", version });
}

export function encodeControl(tick: number, ctrl: Control): string {
  return canonicalLine({
    brake: ctrl.brake,
    steer: ctrl.steer,
    throttle: ctrl.throttle,
    tick,
    type: "CONTROL",
  });
}

export function decodeHelloAck(line: string): HelloAck {
  const msg = JSON.parse(line);
  if (msg.type !== "HELLO_ACK") {
    throw new Error(`expected HELLO_ACK, got ${msg.type}`);
  }
  if (msg.version !== PROTOCOL_VERSION) {
    throw new Error(`unsupported protocol version ${msg.version}`);
  }
  return {
    dt: msg.dt,
    route: { anchor: msg.route.anchor, waypoints: msg.route.waypoints },
    suite: msg.suite,
    version: msg.version,
  };
}

export function decodeTick(line: string): Observation {
  const msg = JSON.parse(line);
  if (msg.type !== "TICK") {
    throw new Error(`expected TICK, got ${msg.type}`);
  }
  let camera: CameraFrame | null = null;
  if (msg.camera !== null) {
    camera = {
      width: msg.camera.width,
      height: msg.camera.height,
      pixels: Uint8Array.from(Buffer.from(msg.camera.pixels_b64, "base64")),
    };
  }
  let lidar: LidarCloud | null = null;
  if (msg.lidar !== null) {
    lidar = { numChannels: msg.lidar.num_channels, points: msg.lidar.points };
  }
  return {
    tick: msg.tick,
    simTimeS: msg.sim_time_s,
    camera,
    lidar,
    scalars: msg.scalars,
  };
}

/**
 * Re-encode a decoded observation into the harness's canonical TICK bytes.
 * decodeTick followed by encodeTick reproduces the original line exactly.
 */
export function encodeTick(obs: Observation): string {
  const camera =
    obs.camera === null
      ? null
      : {
          height: obs.camera.height,
          pixels_b64: Buffer.from(obs.camera.pixels).toString("base64"),
          width: obs.camera.width,
        };
  const lidar =
    obs.lidar === null
      ? null
      : { num_channels: obs.lidar.numChannels, points: obs.lidar.points };
  return canonicalLine({
    camera,
    lidar,
    scalars: obs.scalars.map((s) => ({ kind: s.kind, values: s.values })),
    sim_time_s: obs.simTimeS,
    tick: obs.tick,
    type: "TICK",
  });
}

export const EARTH_RADIUS_M = 6371000.0;

const DEG = Math.PI / 180.0;

/** Equirectangular GNSS degrees -> local meters around the anchor. */
export function xyFromGnss(
  lat: number,
  lon: number,
  anchor: [number, number],
): [number, number] {
  const [lat0, lon0] = anchor;
  const y = (lat - lat0) * DEG * EARTH_RADIUS_M;
  const x = (lon - lon0) * DEG * EARTH_RADIUS_M * Math.cos(lat0 * DEG);
  return [x, y];
}
