# ElastoMatch Tests Package
