/**
 * Entry point.
 *
 *   node dist/main.js                       # stdio mode (spawned by the
 *                                           # harness via --agent cmd:"...")
 *   node dist/main.js --tcp <host>:<port>   # listen and serve sessions for
 *                                           # --agent tcp:<host>:<port>
 *   node dist/main.js --name my-agent
 */

import * as net from "node:net";

import { runSession } from "./client";

function parseArgs(argv: string[]): { tcp: string | null; name: string } {
  let tcp: string | null = null;
  let name = "sraf-ts-client";
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--tcp") {
      tcp = argv[++i];
    } else if (argv[i] === "--name") {
      name = argv[++i];
    } else {
      process.stderr.write(`unknown argument: ${argv[i]}\n`);
      process.exit(2);
    }
  }
  return { tcp, name };
}

async function main(): Promise<void> {
  const { tcp, name } = parseArgs(process.argv.slice(2));

  if (tcp === null) {
    try {
      await runSession(process.stdin, process.stdout, name);
    } catch (err) {
      process.stderr.write(`session failed: ${(err as Error).message}\n`);
      process.exit(1);
    }
    return;
  }

  const sep = tcp.lastIndexOf(":");
  if (sep <= 0) {
    process.stderr.write(`--tcp expects host:port, got ${tcp}\n`);
    process.exit(2);
  }
  const host = tcp.slice(0, sep);
  const port = Number(tcp.slice(sep + 1));

  // The harness connects once per run; serve sessions until killed.
  const server = net.createServer((socket) => {
    runSession(socket, socket, name)
      .catch((err) =>
        process.stderr.write(`session failed: ${(err as Error).message}\n`),
      )
      .finally(() => socket.end());
  });
  server.listen(port, host, () => {
    process.stderr.write(`listening on ${host}:${port}\n`);
  });
}

main();
