/**
 * Development server: serves the console statics and pipes WebSocket binary
 * frames to the simulator bridge's TCP socket byte-for-byte (browsers cannot
 * open raw TCP). Run the simulator with --bridge first, then:
 *
 *   npx ts-node src/proxy.ts --listen 8890 --bridge-port 8891
 */

import * as fs from "node:fs";
import * as http from "node:http";
import * as net from "node:net";
import * as path from "node:path";

import { WebSocketServer, WebSocket } from "ws";

interface Args {
  listen: number;
  bridgeHost: string;
  bridgePort: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { listen: 8890, bridgeHost: "127.0.0.1", bridgePort: 8891 };
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--listen") args.listen = Number(argv[++i]);
    else if (argv[i] === "--bridge-host") args.bridgeHost = argv[++i];
    else if (argv[i] === "--bridge-port") args.bridgePort = Number(argv[++i]);
  }
  return args;
}

const MIME: Record<string, string> = {
  ".html": "text/html",
  ".js": "text/javascript",
  ".css": "text/css",
  ".map": "application/json",
};

function serveStatic(root: string[], req: http.IncomingMessage, res: http.ServerResponse) {
  const url = (req.url ?? "/").split("?")[0];
  const rel = url === "/" ? "index.html" : url.replace(/^\/+/, "");
  for (const dir of root) {
    const file = path.join(dir, rel);
    if (!file.startsWith(dir)) continue; // no path escapes
    if (fs.existsSync(file) && fs.statSync(file).isFile()) {
      res.writeHead(200, { "content-type": MIME[path.extname(file)] ?? "application/octet-stream" });
      fs.createReadStream(file).pipe(res);
      return;
    }
  }
  res.writeHead(404);
  res.end("not found");
}

export function startProxy(args: Args): http.Server {
  const here = path.dirname(new URL(import.meta.url).pathname);
  const roots = [path.join(here, "..", "public"), path.join(here, "..", "dist")];
  const server = http.createServer((req, res) => serveStatic(roots, req, res));
  const wss = new WebSocketServer({ server, path: "/bridge" });

  wss.on("connection", (ws: WebSocket) => {
    const tcp = net.createConnection({ host: args.bridgeHost, port: args.bridgePort });
    tcp.on("data", (data: Buffer) => {
      if (ws.readyState === WebSocket.OPEN) ws.send(data);
    });
    tcp.on("close", () => ws.close());
    tcp.on("error", () => ws.close());
    ws.on("message", (data: Buffer) => tcp.write(data));
    ws.on("close", () => tcp.destroy());
  });

  server.listen(args.listen, () => {
    console.log(
      `console on http://localhost:${args.listen}/ ` +
        `(piping /bridge to ${args.bridgeHost}:${args.bridgePort})`,
    );
  });
  return server;
}

const isMain = process.argv[1] && import.meta.url.endsWith(path.basename(process.argv[1]));
if (isMain) {
  startProxy(parseArgs(process.argv.slice(2)));
}
