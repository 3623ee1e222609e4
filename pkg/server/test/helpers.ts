/** Minimal promise-based PTD1 client for exercising a live server socket. */

import net from 'node:net';

import { FrameType, Header, decodeFrame, encodeFrame, frameSize } from '../src/protocol.js';

export interface RawFrame {
  type: FrameType;
  header: Header;
  payload: Buffer;
  raw: Buffer; // exact bytes as they arrived, for golden comparisons
}

export class RawClient {
  private pending: Buffer = Buffer.alloc(0);
  private waiters: Array<(frame: RawFrame | null) => void> = [];
  private closed = false;

  private constructor(private readonly socket: net.Socket) {
    socket.on('data', (chunk: Buffer) => {
      this.pending = Buffer.concat([this.pending, chunk]);
      this.drain();
    });
    socket.on('close', () => {
      this.closed = true;
      this.drain();
    });
    socket.on('error', () => undefined);
  }

  static connect(addr: string): Promise<RawClient> {
    const sep = addr.lastIndexOf(':');
    const host = addr.slice(0, sep);
    const port = Number(addr.slice(sep + 1));
    return new Promise((resolve, reject) => {
      const socket = net.createConnection(port, host, () => resolve(new RawClient(socket)));
      socket.once('error', reject);
    });
  }

  private drain(): void {
    while (this.waiters.length > 0) {
      const size = this.pending.length >= 9 ? frameSize(this.pending) : null;
      if (size !== null && this.pending.length >= size) {
        const raw = Buffer.from(this.pending.subarray(0, size));
        const frame = decodeFrame(raw);
        this.pending = this.pending.subarray(size);
        this.waiters.shift()!({ ...frame, raw });
        continue;
      }
      if (this.closed) {
        this.waiters.shift()!(null);
        continue;
      }
      return;
    }
  }

  /** Next full frame off the wire, or null once the server hangs up. */
  nextFrame(): Promise<RawFrame | null> {
    return new Promise(resolve => {
      this.waiters.push(resolve);
      this.drain();
    });
  }

  async request(type: FrameType, header: Header, payload?: Buffer): Promise<RawFrame> {
    this.socket.write(encodeFrame(type, header, payload));
    const frame = await this.nextFrame();
    if (frame === null) {
      throw new Error('connection closed before a response arrived');
    }
    return frame;
  }

  write(bytes: Buffer): void {
    this.socket.write(bytes);
  }

  destroy(): void {
    this.socket.destroy();
  }
}
