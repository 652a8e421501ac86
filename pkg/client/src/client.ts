/** Session loop: handshake, then answer every TICK with a CONTROL until
 * END or stream close. Works over any line-oriented duplex stream. */

import * as readline from "node:readline";
import { Readable, Writable } from "node:stream";

import { decideControl } from "./policy";
import {
  HelloAck,
  decodeHelloAck,
  decodeTick,
  encodeControl,
  encodeHello,
} from "./protocol";

export interface SessionResult {
  ticksAnswered: number;
  endResult: unknown | null;
}

export async function runSession(
  input: Readable,
  output: Writable,
  name = "sraf-ts-client",
): Promise<SessionResult> {
  const rl = readline.createInterface({ input, crlfDelay: Infinity });
  const lines = rl[Symbol.asyncIterator]();

  output.write(encodeHello(name));

  const first = await lines.next();
  if (first.done) {
    rl.close();
    return { ticksAnswered: 0, endResult: null };
  }
  let ack: HelloAck;
  try {
    ack = decodeHelloAck(first.value);
  } catch (err) {
    rl.close();
    throw err;
  }

  let ticksAnswered = 0;
  let endResult: unknown | null = null;
  for (;;) {
    const item = await lines.next();
    if (item.done) {
      break; // harness closed the stream
    }
    const msg = JSON.parse(item.value);
    if (msg.type === "END") {
      endResult = msg.result;
      break;
    }
    if (msg.type !== "TICK") {
      continue;
    }
    const obs = decodeTick(item.value);
    const ctrl = decideControl(obs, ack.route);
    output.write(encodeControl(obs.tick, ctrl));
    ticksAnswered += 1;
  }
  rl.close();
  return { ticksAnswered, endResult };
}
