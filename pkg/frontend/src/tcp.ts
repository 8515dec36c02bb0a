/**
 * Node-side TCP client for the bridge protocol; used by the proxy and the
 * integration tests.
 */

import * as net from "node:net";

import { FrameDecoder, InboundMessage, encodeFrame, helloMessage } from "./protocol";

export class TcpClient {
  private socket: net.Socket;
  private decoder = new FrameDecoder();
  private queue: InboundMessage[] = [];
  private waiters: ((msg: InboundMessage) => void)[] = [];
  private closed = false;

  private constructor(socket: net.Socket) {
    this.socket = socket;
    socket.on("data", (data: Buffer) => {
      for (const msg of this.decoder.feed(new Uint8Array(data))) {
        const waiter = this.waiters.shift();
        if (waiter) waiter(msg);
        else this.queue.push(msg);
      }
    });
    socket.on("close", () => {
      this.closed = true;
      for (const waiter of this.waiters.splice(0)) {
        waiter({ type: "error", error: "closed" });
      }
    });
    socket.on("error", () => undefined);
  }

  static connect(host: string, port: number): Promise<TcpClient> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port }, () => resolve(new TcpClient(socket)));
      socket.on("error", reject);
    });
  }

  hello(): void {
    this.send(helloMessage());
  }

  send(message: object): void {
    if (!this.closed) this.socket.write(encodeFrame(message));
  }

  /** Next inbound message, in arrival order. */
  next(timeoutMs = 5000): Promise<InboundMessage> {
    const queued = this.queue.shift();
    if (queued) return Promise.resolve(queued);
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        const idx = this.waiters.indexOf(handler);
        if (idx >= 0) this.waiters.splice(idx, 1);
        reject(new Error("timed out waiting for a message"));
      }, timeoutMs);
      const handler = (msg: InboundMessage) => {
        clearTimeout(timer);
        resolve(msg);
      };
      this.waiters.push(handler);
    });
  }

  async nextOfType<T extends InboundMessage>(
    type: string,
    timeoutMs = 5000,
  ): Promise<T> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const remaining = deadline - Date.now();
      if (remaining <= 0) throw new Error(`timed out waiting for ${type}`);
      const msg = await this.next(remaining);
      if (msg.type === type) return msg as T;
    }
  }

  close(): void {
    this.closed = true;
    this.socket.destroy();
  }
}
