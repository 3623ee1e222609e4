/**
 * TCP front end. One frame in flight per connection: requests on a socket
 * are answered strictly in order, and the single model instance is shared
 * by all connections (node's event loop serializes access).
 */

import net from 'node:net';

import {
  FrameType,
  Header,
  HeaderValue,
  ProtocolError,
  decodeFrame,
  encodeFrame,
  frameSize,
} from './protocol.js';
import { ServerError, ToyGmmModel } from './model.js';
import { numel, payloadToTensor, tensorToPayload } from './tensor.js';

function headerInt(header: Header, key: string): number | null {
  const value = header[key];
  return typeof value === 'number' && Number.isInteger(value) ? value : null;
}

function headerShape(header: Header): number[] | null {
  const value = header['shape'];
  if (!Array.isArray(value) || value.length === 0) {
    return null;
  }
  const shape: number[] = [];
  for (const dim of value) {
    if (typeof dim !== 'number' || !Number.isInteger(dim) || dim < 1) {
      return null;
    }
    shape.push(dim);
  }
  return shape;
}

function sameShape(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((dim, i) => dim === b[i]);
}

export class Ptd1Server {
  readonly model: ToyGmmModel;
  private readonly server: net.Server;

  constructor(model: ToyGmmModel = new ToyGmmModel()) {
    this.model = model;
    this.server = net.createServer(socket => this.serveConnection(socket));
  }

  listen(host = '127.0.0.1', port = 0): Promise<string> {
    return new Promise((resolve, reject) => {
      this.server.once('error', reject);
      this.server.listen(port, host, () => {
        this.server.removeListener('error', reject);
        resolve(this.address());
      });
    });
  }

  address(): string {
    const addr = this.server.address();
    if (addr === null || typeof addr === 'string') {
      throw new Error('server is not listening on a TCP port');
    }
    return `${addr.address}:${addr.port}`;
  }

  close(): Promise<void> {
    return new Promise((resolve, reject) => {
      this.server.close(err => (err ? reject(err) : resolve()));
    });
  }

  private serveConnection(socket: net.Socket): void {
    let pending: Buffer = Buffer.alloc(0);
    socket.on('error', () => socket.destroy());
    socket.on('data', (chunk: Buffer) => {
      pending = pending.length === 0 ? chunk : Buffer.concat([pending, chunk]);
      while (true) {
        let size: number | null;
        try {
          size = frameSize(pending);
        } catch {
          socket.destroy(); // corrupt stream, no way to resync
          return;
        }
        if (size === null || pending.length < size) {
          return;
        }
        let done = false;
        try {
          const frame = decodeFrame(pending);
          done = this.dispatch(socket, frame.type, frame.header, frame.payload);
        } catch (err) {
          if (err instanceof ProtocolError) {
            socket.destroy();
            return;
          }
          throw err;
        }
        if (done) {
          socket.end();
          return;
        }
        pending = pending.subarray(size);
      }
    });
  }

  /** Answer one request frame; returns true when the connection should end. */
  private dispatch(socket: net.Socket, type: FrameType, header: Header, payload: Buffer): boolean {
    const reqId = headerInt(header, 'id') ?? 0;
    try {
      switch (type) {
        case FrameType.Hello: {
          const resp: Header = { ...this.model.advert(), id: reqId } as Header;
          socket.write(encodeFrame(FrameType.Result, resp));
          return false;
        }
        case FrameType.EmbedText: {
          const text = header['text'];
          if (typeof text !== 'string') {
            throw new ServerError('backend', 'EMBED_TEXT needs a string text field');
          }
          const cond = this.model.embedText(text);
          socket.write(encodeFrame(FrameType.Result, { cond, id: reqId }));
          return false;
        }
        case FrameType.Eps: {
          const t = headerInt(header, 't');
          const cond = headerInt(header, 'cond');
          if (t === null || cond === null) {
            throw new ServerError('backend', 'EPS needs integer t and cond fields');
          }
          if (!this.model.hasCondition(cond)) {
            throw new ServerError('cond_unknown', `unknown condition id ${cond}`);
          }
          const shape = this.requireShape(header, payload);
          if (!sameShape(shape, this.model.config.shape)) {
            throw new ServerError('shape', `EPS expects [${this.model.config.shape}], got [${shape}]`);
          }
          const out = this.model.eps(payloadToTensor(payload, shape), t, cond);
          socket.write(encodeFrame(
            FrameType.Result,
            { id: reqId, shape: shape as HeaderValue },
            tensorToPayload(out),
          ));
          return false;
        }
        case FrameType.Encode: {
          const shape = this.requireShape(header, payload);
          const out = this.model.encodeImage(payloadToTensor(payload, shape), shape);
          socket.write(encodeFrame(
            FrameType.Result,
            { id: reqId, shape: out.shape as HeaderValue },
            tensorToPayload(out.values),
          ));
          return false;
        }
        case FrameType.Decode: {
          const shape = this.requireShape(header, payload);
          const out = this.model.decodeLatent(payloadToTensor(payload, shape), shape);
          socket.write(encodeFrame(
            FrameType.Result,
            { id: reqId, shape: out.shape as HeaderValue },
            tensorToPayload(out.values),
          ));
          return false;
        }
        case FrameType.Bye: {
          socket.write(encodeFrame(FrameType.Result, { id: reqId }));
          return true;
        }
        default:
          throw new ServerError('bad_request', `unexpected frame ${FrameType[type]}`);
      }
    } catch (err) {
      if (err instanceof ServerError) {
        socket.write(encodeFrame(FrameType.Error, {
          code: err.code,
          id: reqId,
          message: err.message,
        }));
        return false;
      }
      socket.write(encodeFrame(FrameType.Error, {
        code: 'backend',
        id: reqId,
        message: `internal fault: ${err}`,
      }));
      return false;
    }
  }

  private requireShape(header: Header, payload: Buffer): number[] {
    const shape = headerShape(header);
    if (shape === null) {
      throw new ServerError('shape', 'request lacks a valid shape field');
    }
    if (payload.length !== numel(shape) * 4) {
      throw new ServerError('shape', `payload has ${payload.length} bytes, shape [${shape}] needs ${numel(shape) * 4}`);
    }
    return shape;
  }
}
