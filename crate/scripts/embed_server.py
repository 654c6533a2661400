"""Serve a sentence-transformers model over the embedding contract q2q expects.

GET  /info   -> {"dim": n}
POST /embed  {"texts": [...]} -> {"vectors": [[...], ...]}

Usage: python scripts/embed_server.py [--model all-MiniLM-L6-v2] [--port 8090]
"""

import argparse
import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from sentence_transformers import SentenceTransformer


def make_handler(model):
    dim = model.get_sentence_embedding_dimension()

    class Handler(BaseHTTPRequestHandler):
        def _send(self, status, payload):
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/info":
                self._send(200, {"dim": dim})
            else:
                self._send(404, {"error": "not found"})

        def do_POST(self):
            if self.path != "/embed":
                return self._send(404, {"error": "not found"})
            length = int(self.headers.get("Content-Length", 0))
            try:
                texts = json.loads(self.rfile.read(length))["texts"]
            except (ValueError, KeyError) as e:
                return self._send(400, {"error": str(e)})
            vectors = model.encode(texts, normalize_embeddings=True)
            self._send(200, {"vectors": vectors.tolist()})

    return Handler


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", default="sentence-transformers/all-MiniLM-L6-v2")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8090)
    args = parser.parse_args()
    model = SentenceTransformer(args.model)
    server = ThreadingHTTPServer((args.host, args.port), make_handler(model))
    print(f"serving {args.model} on http://{args.host}:{args.port}")
    server.serve_forever()


if __name__ == "__main__":
    main()
