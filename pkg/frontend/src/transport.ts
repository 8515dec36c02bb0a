/**
 * Browser transport: the console speaks protocol v1 over a WebSocket whose
 * binary payloads are raw bridge bytes (the proxy pipes them to TCP 1:1).
 */

import { FrameDecoder, InboundMessage, encodeFrame, helloMessage } from "./protocol";

export class WsTransport {
  private ws: WebSocket;
  private decoder = new FrameDecoder();
  onmessage: (msg: InboundMessage) => void = () => {};
  onclose: () => void = () => {};
  onopen: () => void = () => {};

  constructor(url: string) {
    this.ws = new WebSocket(url);
    this.ws.binaryType = "arraybuffer";
    this.ws.onopen = () => {
      this.sendRaw(helloMessage());
      this.onopen();
    };
    this.ws.onmessage = (event: MessageEvent) => {
      const bytes = new Uint8Array(event.data as ArrayBuffer);
      for (const msg of this.decoder.feed(bytes)) this.onmessage(msg);
    };
    this.ws.onclose = () => this.onclose();
    this.ws.onerror = () => this.onclose();
  }

  sendRaw(message: object): void {
    if (this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(encodeFrame(message).slice().buffer);
    }
  }

  close(): void {
    this.ws.close();
  }
}
