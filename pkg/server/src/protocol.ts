/**
 * PTD1 frame codec.
 *
 * Frame layout: magic "PTD1", u8 message type, u32 LE header length,
 * canonical UTF-8 JSON header, u64 LE payload length, raw little-endian
 * f32 payload. Canonical JSON means sorted keys, no whitespace, ASCII
 * escapes and integer-only numbers, so re-encoding a decoded frame
 * reproduces the input bytes exactly.
 */

import { crc32 } from 'node:zlib';

export const MAGIC = Buffer.from('PTD1', 'ascii');
export const MAX_PAYLOAD = 2 ** 31;
export const NULL_COND_ID = 0;

export enum FrameType {
  Hello = 0,
  EmbedText = 1,
  Eps = 2,
  Encode = 3,
  Decode = 4,
  Result = 5,
  Error = 6,
  Bye = 7,
}

export type HeaderValue = string | number | HeaderValue[] | { [key: string]: HeaderValue };
export type Header = { [key: string]: HeaderValue };

export class ProtocolError extends Error {}

function escapeString(value: string): string {
  // JSON.stringify handles quotes, backslashes and control chars; Python's
  // canonical form additionally escapes everything from DEL upward.
  return JSON.stringify(value).replace(
    /[\u007f-\uffff]/g,
    ch => '\\u' + ch.charCodeAt(0).toString(16).padStart(4, '0'),
  );
}

function writeValue(value: HeaderValue, path: string): string {
  if (typeof value === 'string') {
    return escapeString(value);
  }
  if (typeof value === 'number') {
    if (!Number.isInteger(value)) {
      throw new ProtocolError(`header field ${path} must be an integer`);
    }
    return String(value);
  }
  if (Array.isArray(value)) {
    const items = value.map((item, i) => writeValue(item, `${path}[${i}]`));
    return '[' + items.join(',') + ']';
  }
  if (value !== null && typeof value === 'object') {
    const keys = Object.keys(value).sort();
    const items = keys.map(k => `${escapeString(k)}:${writeValue(value[k], `${path}.${k}`)}`);
    return '{' + items.join(',') + '}';
  }
  throw new ProtocolError(`header field ${path} has unsupported type`);
}

/** Serialize a header object to canonical JSON bytes. */
export function canonicalHeader(header: Header): Buffer {
  if (header === null || typeof header !== 'object' || Array.isArray(header)) {
    throw new ProtocolError('header must be an object');
  }
  return Buffer.from(writeValue(header, '$'), 'ascii');
}

export function encodeFrame(type: FrameType, header: Header, payload: Buffer = Buffer.alloc(0)): Buffer {
  if (!(type in FrameType)) {
    throw new ProtocolError(`unknown message type ${type}`);
  }
  if (payload.length % 4 !== 0) {
    throw new ProtocolError(`payload length ${payload.length} is not a multiple of 4`);
  }
  const body = canonicalHeader(header);
  const head = Buffer.alloc(9);
  MAGIC.copy(head, 0);
  head.writeUInt8(type, 4);
  head.writeUInt32LE(body.length, 5);
  const plen = Buffer.alloc(8);
  plen.writeBigUInt64LE(BigInt(payload.length), 0);
  return Buffer.concat([head, body, plen, payload]);
}

export interface DecodedFrame {
  type: FrameType;
  header: Header;
  payload: Buffer;
  end: number;
}

/** Parse one frame out of a buffer; throws ProtocolError on anything malformed. */
export function decodeFrame(data: Buffer, offset = 0): DecodedFrame {
  const need = offset + 9;
  if (data.length < need) {
    throw new ProtocolError('frame truncated before header length');
  }
  if (!data.subarray(offset, offset + 4).equals(MAGIC)) {
    throw new ProtocolError(`bad magic ${data.subarray(offset, offset + 4).toString('hex')}`);
  }
  const typeCode = data.readUInt8(offset + 4);
  if (!(typeCode in FrameType)) {
    throw new ProtocolError(`unknown message type ${typeCode}`);
  }
  const headerLen = data.readUInt32LE(offset + 5);
  if (data.length < need + headerLen + 8) {
    throw new ProtocolError('frame truncated inside header');
  }
  const rawHeader = data.subarray(need, need + headerLen);
  let header: unknown;
  try {
    header = JSON.parse(rawHeader.toString('utf8'));
  } catch (err) {
    throw new ProtocolError(`header is not valid JSON: ${err}`);
  }
  if (header === null || typeof header !== 'object' || Array.isArray(header)) {
    throw new ProtocolError('header must be a JSON object');
  }
  let canonical: Buffer;
  try {
    canonical = canonicalHeader(header as Header);
  } catch {
    throw new ProtocolError('header is not in canonical form');
  }
  if (!canonical.equals(rawHeader)) {
    throw new ProtocolError('header is not in canonical form');
  }
  let pos = need + headerLen;
  const payloadLen = data.readBigUInt64LE(pos);
  if (payloadLen > BigInt(MAX_PAYLOAD)) {
    throw new ProtocolError(`payload length ${payloadLen} exceeds limit`);
  }
  pos += 8;
  const end = pos + Number(payloadLen);
  if (data.length < end) {
    throw new ProtocolError('frame truncated inside payload');
  }
  return {
    type: typeCode as FrameType,
    header: header as Header,
    payload: Buffer.from(data.subarray(pos, end)),
    end,
  };
}

/**
 * Total byte length of the frame starting at ``offset``, or null when the
 * buffer does not yet hold enough bytes to know. Magic, type and payload
 * limit are validated as soon as they are visible so a garbage connection
 * fails fast instead of accumulating forever.
 */
export function frameSize(data: Buffer, offset = 0): number | null {
  if (data.length < offset + 9) {
    return null;
  }
  if (!data.subarray(offset, offset + 4).equals(MAGIC)) {
    throw new ProtocolError(`bad magic ${data.subarray(offset, offset + 4).toString('hex')}`);
  }
  const typeCode = data.readUInt8(offset + 4);
  if (!(typeCode in FrameType)) {
    throw new ProtocolError(`unknown message type ${typeCode}`);
  }
  const headerLen = data.readUInt32LE(offset + 5);
  if (data.length < offset + 9 + headerLen + 8) {
    return null;
  }
  const payloadLen = data.readBigUInt64LE(offset + 9 + headerLen);
  if (payloadLen > BigInt(MAX_PAYLOAD)) {
    throw new ProtocolError(`payload length ${payloadLen} exceeds limit`);
  }
  return 9 + headerLen + 8 + Number(payloadLen);
}

/** Deterministic condition id for a prompt text; empty text is pinned to 0. */
export function embedIdForText(text: string): number {
  if (text === '') {
    return NULL_COND_ID;
  }
  return (crc32(Buffer.from(text, 'utf8')) & 0x7fffffff) || 1;
}

export function parseAddr(addr: string): { host: string; port: number } {
  const sep = addr.lastIndexOf(':');
  if (sep <= 0) {
    throw new ProtocolError(`addr must look like host:port, got ${addr}`);
  }
  const port = Number(addr.slice(sep + 1));
  if (!Number.isInteger(port)) {
    throw new ProtocolError(`port in ${addr} is not an integer`);
  }
  return { host: addr.slice(0, sep), port };
}
